"""Proper orthogonal decomposition of centered snapshot matrices.

Two routes produce the same subspace: a thin SVD of the snapshot data and an
eigendecomposition of its temporal covariance ``X X^T / (T - 1)``. Modes are
unit-norm columns with the sign fixed so that the first significant entry is
positive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .flow import DomainError, GridSpec, SnapshotMatrix

__all__ = [
    "DegenerateRankWarning",
    "PodBasis",
    "pod_svd",
    "pod_covariance",
    "temporal_coefficients",
    "truncation_rank",
    "truncation_error",
    "mode_values_at",
    "interpolation_weights",
    "interpolate_rows",
]

DEFAULT_ENERGY = 0.999


class DegenerateRankWarning(UserWarning):
    """The snapshot data carries (numerically) no energy beyond some rank."""


@dataclass(frozen=True)
class PodBasis:
    """Orthonormal spatial modes with their energies.

    ``energies`` are singular values for the ``"svd"`` flavor and covariance
    eigenvalues for ``"covariance-eigen"``.
    """

    modes: np.ndarray
    energies: np.ndarray
    mean_field: np.ndarray
    grid: GridSpec
    flavor: str = "svd"
    n_snapshots: int = 0
    degenerate: bool = field(default=False)

    def __post_init__(self):
        if self.modes.shape[1] != self.energies.shape[0]:
            raise ValueError("mode count and energy count differ")
        if self.modes.shape[0] != 2 * self.grid.n_loc:
            raise ValueError("mode length must equal 2 * n_loc")
        self.modes.setflags(write=False)
        self.energies.setflags(write=False)

    @property
    def r(self) -> int:
        return self.modes.shape[1]

    def truncate(self, r: int) -> "PodBasis":
        if not 0 <= r <= self.r:
            raise ValueError(f"cannot truncate a rank-{self.r} basis to {r}")
        return PodBasis(self.modes[:, :r].copy(), self.energies[:r].copy(),
                        self.mean_field, self.grid, self.flavor, self.n_snapshots,
                        self.degenerate)

    def squared_singular_values(self) -> np.ndarray:
        if self.flavor == "svd":
            return self.energies**2
        return self.energies * max(self.n_snapshots - 1, 1)

    def scaled_modes(self) -> np.ndarray:
        """Modes multiplied by their covariance eigenvalue (``lambda_i v_i``)."""
        lam = self.squared_singular_values() / max(self.n_snapshots - 1, 1)
        return self.modes * lam[None, :]

    def restrict(self, loc) -> np.ndarray:
        """Mode rows (u then v) at grid locations ``loc``."""
        return self.modes[self.grid.state_rows(loc)]


def _fix_signs(modes: np.ndarray) -> np.ndarray:
    for k in range(modes.shape[1]):
        col = modes[:, k]
        big = np.abs(col) > 1e-8 * np.max(np.abs(col), initial=0.0)
        if big.any() and col[np.argmax(big)] < 0:
            modes[:, k] = -col
    return modes


def truncation_rank(sv: np.ndarray, rank: int | None = None,
                    energy: float | None = None) -> int:
    """Mode count from an explicit rank or a cumulative energy fraction.

    The fraction is accumulated over singular values ``sv`` (not their
    squares), the quantity stored as ``energies`` by :func:`pod_svd`.
    """
    if rank is not None and energy is not None:
        raise ValueError("give either rank or energy, not both")
    if rank is not None:
        if not 0 <= rank <= sv.size:
            raise ValueError(f"rank {rank} exceeds available modes {sv.size}")
        return int(rank)
    energy = DEFAULT_ENERGY if energy is None else energy
    if not 0 < energy <= 1:
        raise ValueError(f"energy threshold must lie in (0, 1], got {energy}")
    total = sv.sum()
    if total <= 0:
        return 0
    frac = np.cumsum(sv) / total
    frac[-1] = 1.0  # roundoff can leave the last entry just below 1
    return int(np.searchsorted(frac, energy - 1e-15) + 1)


def _check_input(X: SnapshotMatrix):
    if X.data.size == 0:
        raise ValueError("empty snapshot matrix")


def _numerical_rank(sv: np.ndarray, tol: float = 1e-13) -> int:
    if sv.size == 0 or sv[0] <= 0:
        return 0
    return int(np.sum(sv > sv[0] * tol))


def pod_svd(X: SnapshotMatrix, rank: int | None = None,
            energy: float | None = None, *, svd=None) -> PodBasis:
    """POD via thin SVD; modes are the leading left singular vectors.

    ``svd`` may carry a precomputed ``(U, s)`` pair of ``X.data``.
    """
    _check_input(X)
    U, s = svd if svd is not None else np.linalg.svd(X.data, full_matrices=False)[:2]
    r = truncation_rank(s, rank, energy)
    nrank = _numerical_rank(s)
    degenerate = nrank < r or nrank == 0
    if degenerate:
        warnings.warn(f"snapshot data has numerical rank {nrank}; requested {r} modes",
                      DegenerateRankWarning, stacklevel=2)
    modes = _fix_signs(U[:, :r].copy())
    return PodBasis(modes, s[:r].copy(), X.mean_field.copy(), X.grid, "svd",
                    X.times.count, degenerate)


def pod_covariance(X: SnapshotMatrix, rank: int | None = None,
                   energy: float | None = None) -> PodBasis:
    """POD via eigendecomposition of the temporal covariance.

    Eigenvalues are re-evaluated as Rayleigh quotients ``|X^T v|^2 / (T - 1)``
    so that small eigenvalues do not inherit the squared conditioning of the
    covariance product.
    """
    _check_input(X)
    denom = max(X.times.count - 1, 1)
    cov = X.data @ X.data.T / denom
    w, V = np.linalg.eigh(cov)
    V = V[:, ::-1]
    w = np.clip(w[::-1], 0.0, None)
    r = truncation_rank(np.sqrt(w * denom), rank, energy)
    lam = np.sum((X.data.T @ V[:, :r]) ** 2, axis=0) / denom
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    modes = _fix_signs(V[:, :r][:, order].copy())
    # eigenvalues of the product resolve only down to ~eps * lambda_max
    nrank = _numerical_rank(w, tol=1e-12)
    degenerate = nrank < r or nrank == 0
    if degenerate:
        warnings.warn(f"covariance has numerical rank {nrank}; requested {r} modes",
                      DegenerateRankWarning, stacklevel=2)
    return PodBasis(modes, lam, X.mean_field.copy(), X.grid, "covariance-eigen",
                    X.times.count, degenerate)


def temporal_coefficients(basis: PodBasis, X: SnapshotMatrix) -> np.ndarray:
    """Mode amplitudes ``Phi^T X`` with shape ``(r, T)``."""
    if basis.grid != X.grid or basis.modes.shape[0] != X.data.shape[0]:
        raise ValueError("basis and snapshot matrix use different grids")
    return basis.modes.T @ X.data


def truncation_error(basis: PodBasis, X: SnapshotMatrix) -> float:
    """Frobenius norm of the part of ``X`` outside the span of the modes."""
    M = temporal_coefficients(basis, X)
    return float(np.linalg.norm(X.data - basis.modes @ M))


def interpolation_weights(grid: GridSpec, p) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear stencil for points ``p`` (shape ``(k, 2)``).

    Returns ``(loc, w)`` each of shape ``(k, 4)``: corner node ids and weights.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if not grid.contains(p):
        raise DomainError("interpolation point outside the grid domain")
    fx = (p[:, 0] - grid.x_range[0]) / grid.hx
    fy = (p[:, 1] - grid.y_range[0]) / grid.hy
    i0 = np.clip(np.floor(fx).astype(int), 0, grid.nx - 2)
    j0 = np.clip(np.floor(fy).astype(int), 0, grid.ny - 2)
    tx = np.clip(fx - i0, 0.0, 1.0)
    ty = np.clip(fy - j0, 0.0, 1.0)
    loc = np.stack([
        grid.linear_index(i0, j0), grid.linear_index(i0 + 1, j0),
        grid.linear_index(i0, j0 + 1), grid.linear_index(i0 + 1, j0 + 1),
    ], axis=1)
    w = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=1)
    return loc, w


def interpolate_rows(values: np.ndarray, grid: GridSpec, p) -> np.ndarray:
    """Interpolate stacked (u-block, v-block) data at points ``p``.

    ``values`` has ``2 n_loc`` rows (any trailing columns). The result has
    ``2k`` rows ordered u at every point, then v at every point. Points that
    sit on a node return the stored values exactly.
    """
    loc, w = interpolation_weights(grid, p)
    n = grid.n_loc
    exact = np.isclose(w, 1.0, rtol=0, atol=0)
    out_u = np.einsum("kc,kc...->k...", w, values[loc])
    out_v = np.einsum("kc,kc...->k...", w, values[loc + n])
    hit = exact.any(axis=1)
    if hit.any():
        node = loc[hit][exact[hit]]
        out_u[hit] = values[node]
        out_v[hit] = values[node + n]
    return np.concatenate([out_u, out_v], axis=0)


def mode_values_at(basis: PodBasis, p) -> np.ndarray:
    """Bilinearly interpolated modes at one point, shape ``(r, 2)`` as (u, v)."""
    rows = interpolate_rows(basis.modes, basis.grid, np.asarray(p, dtype=float).reshape(1, 2))
    return rows.T.copy()
