"""Periodic double-gyre flow and snapshot-matrix generation.

Grid nodes use a row-major linear index with x varying fastest::

    loc = j * nx + i        # i indexes x, j indexes y

Snapshot matrices stack components as a u-block followed by a v-block, so
row ``loc`` holds u at node ``loc`` and row ``n_loc + loc`` holds v.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainError",
    "DoubleGyreParams",
    "GridSpec",
    "TimeGrid",
    "SnapshotMatrix",
    "stream_function",
    "velocity",
    "velocity_field",
    "grid_velocity",
    "build_snapshot_matrix",
]

X_RANGE = (0.0, 2.0)
Y_RANGE = (0.0, 1.0)


class DomainError(ValueError):
    """Raised when a position lies outside the flow domain."""


@dataclass(frozen=True)
class DoubleGyreParams:
    A: float = 0.1
    epsilon: float = 0.25
    omega: float = 2.0 * math.pi / 10.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError(f"amplitude A must be positive, got {self.A}")
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in [0, 0.5), got {self.epsilon}")
        if not self.omega >= 0:
            raise ValueError(f"omega must be nonnegative, got {self.omega}")

    @property
    def steady(self) -> bool:
        return self.epsilon == 0.0 or self.omega == 0.0

    def a(self, t):
        return self.epsilon * np.sin(self.omega * np.asarray(t, dtype=float))

    def b(self, t):
        return 1.0 - 2.0 * self.epsilon * np.sin(self.omega * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    x_range: tuple[float, float] = X_RANGE
    y_range: tuple[float, float] = Y_RANGE

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs nx, ny >= 2, got ({self.nx}, {self.ny})")
        if not (self.x_range[1] > self.x_range[0] and self.y_range[1] > self.y_range[0]):
            raise ValueError("grid ranges must be increasing intervals")

    @property
    def n_loc(self) -> int:
        return self.nx * self.ny

    @property
    def x(self) -> np.ndarray:
        return np.linspace(*self.x_range, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(*self.y_range, self.ny)

    @property
    def hx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / (self.ny - 1)

    def linear_index(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def ij(self, loc):
        loc = np.asarray(loc)
        return loc % self.nx, loc // self.nx

    def positions(self, loc=None) -> np.ndarray:
        """(k, 2) array of node coordinates; all nodes when ``loc`` is None."""
        if loc is None:
            loc = np.arange(self.n_loc)
        i, j = self.ij(loc)
        return np.column_stack([self.x[i], self.y[j]])

    def contains(self, p, tol: float = 1e-12) -> bool:
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        return bool(
            np.all(p[:, 0] >= self.x_range[0] - tol)
            and np.all(p[:, 0] <= self.x_range[1] + tol)
            and np.all(p[:, 1] >= self.y_range[0] - tol)
            and np.all(p[:, 1] <= self.y_range[1] + tol)
        )

    def state_rows(self, loc) -> np.ndarray:
        """Snapshot-matrix rows holding u then v for the given locations."""
        loc = np.asarray(loc, dtype=int)
        return np.concatenate([loc, loc + self.n_loc])

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny,
                "x_range": list(self.x_range), "y_range": list(self.y_range)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(int(d["nx"]), int(d["ny"]),
                   tuple(d.get("x_range", X_RANGE)), tuple(d.get("y_range", Y_RANGE)))


@dataclass(frozen=True)
class TimeGrid:
    t0: float = 0.0
    dt: float = 0.01
    count: int = 2001

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.count < 1:
            raise ValueError(f"need at least one snapshot, got {self.count}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.count)

    def to_dict(self) -> dict:
        return {"t0": self.t0, "dt": self.dt, "count": self.count}


@dataclass
class SnapshotMatrix:
    """Temporally centered velocity snapshots.

    ``data`` is ``(2 * n_loc, T)``; ``mean_field`` is the removed temporal mean.
    """

    data: np.ndarray
    mean_field: np.ndarray
    grid: GridSpec
    times: TimeGrid
    params: DoubleGyreParams | None = field(default=None)

    def __post_init__(self):
        rows = 2 * self.grid.n_loc
        if self.data.shape != (rows, self.times.count):
            raise ValueError(
                f"snapshot data shape {self.data.shape} does not match "
                f"({rows}, {self.times.count})"
            )
        if self.mean_field.shape != (rows,):
            raise ValueError("mean field length must equal 2 * n_loc")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def full(self, k=None) -> np.ndarray:
        """Uncentered snapshot(s): column ``k`` or the whole matrix."""
        if k is None:
            return self.data + self.mean_field[:, None]
        return self.data[:, k] + self.mean_field


def _check_domain(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tol = 1e-12
    if (np.any(x < X_RANGE[0] - tol) or np.any(x > X_RANGE[1] + tol)
            or np.any(y < Y_RANGE[0] - tol) or np.any(y > Y_RANGE[1] + tol)):
        raise DomainError("position outside the [0, 2] x [0, 1] domain")
    return x, y


def stream_function(p, t: float, params: DoubleGyreParams) -> float:
    x, y = _check_domain(p[0], p[1])
    f = params.a(t) * x**2 + params.b(t) * x
    return float(params.A * np.sin(np.pi * f) * np.sin(np.pi * y))


def velocity_field(x, y, t, params: DoubleGyreParams, check: bool = True):
    """Vectorized double-gyre velocity; ``x``, ``y``, ``t`` broadcast together."""
    if check:
        x, y = _check_domain(x, y)
    a = params.a(t)
    b = params.b(t)
    f = a * x**2 + b * x
    dfdx = 2.0 * a * x + b
    pa = np.pi * params.A
    u = -pa * np.sin(np.pi * f) * np.cos(np.pi * y)
    v = pa * np.cos(np.pi * f) * np.sin(np.pi * y) * dfdx
    return u, v


def velocity(p, t: float, params: DoubleGyreParams) -> np.ndarray:
    u, v = velocity_field(p[0], p[1], t, params)
    return np.array([float(u), float(v)])


def grid_velocity(grid: GridSpec, t, params: DoubleGyreParams) -> np.ndarray:
    """Stacked (u-block, v-block) field at one time or ``(2 n_loc, len(t))``."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    # the flow separates into x-and-t factors times y factors; same operation
    # order as velocity_field, so values agree bit for bit
    x = grid.x[:, None]
    a, b = params.a(t)[None, :], params.b(t)[None, :]
    f = a * x**2 + b * x
    dfdx = 2.0 * a * x + b
    pa = np.pi * params.A
    su = -pa * np.sin(np.pi * f)          # (nx, nt)
    cv = pa * np.cos(np.pi * f)
    cy = np.cos(np.pi * grid.y)[:, None, None]  # (ny, 1, 1)
    sy = np.sin(np.pi * grid.y)[:, None, None]
    u = (su[None] * cy).reshape(grid.n_loc, -1)
    v = (cv[None] * sy * dfdx[None]).reshape(grid.n_loc, -1)
    out = np.vstack([u, v])
    return out[:, 0] if scalar else out


def build_snapshot_matrix(grid: GridSpec, times: TimeGrid,
                          params: DoubleGyreParams) -> SnapshotMatrix:
    raw = grid_velocity(grid, times.times, params)
    if params.steady or times.count == 1:
        # identical columns; skip the mean so centering is exact
        mean = raw[:, 0].copy()
        data = np.zeros_like(raw)
    else:
        mean = raw.mean(axis=1)
        data = raw - mean[:, None]
    return SnapshotMatrix(data=data, mean_field=mean, grid=grid, times=times, params=params)
