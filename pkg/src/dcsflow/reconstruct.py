"""POD coefficient fitting from point measurements and full-field reconstruction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import DomainError, DoubleGyreParams, grid_velocity, velocity_field
from .pod import PodBasis, interpolate_rows

__all__ = [
    "PointMeasurement",
    "CoefficientFit",
    "ReconstructedField",
    "TrajectoryError",
    "ridge_solve",
    "fit_coefficients",
    "reconstruct",
    "field_error",
    "trajectory_reconstruction_error",
    "ACCUMULATION_POLICIES",
]

RIDGE = 1e-8
ACCUMULATION_POLICIES = ("per-instant", "cumulative-window")


@dataclass(frozen=True)
class PointMeasurement:
    position: tuple[float, float]
    time: float
    velocity: tuple[float, float]


@dataclass
class CoefficientFit:
    a: np.ndarray
    underdetermined: bool
    residual: float


@dataclass
class ReconstructedField:
    estimate: np.ndarray  # (2 n_loc, n_times)
    coefficients: np.ndarray  # (n_times, r)
    times: np.ndarray
    underdetermined: np.ndarray


@dataclass
class TrajectoryError:
    E: float
    per_step: np.ndarray
    rms: np.ndarray
    coefficients: np.ndarray
    underdetermined: np.ndarray
    accumulation: str


def _energy_scale(basis: PodBasis) -> np.ndarray:
    """Per-mode column scale sigma_k / sigma_1 used by the energy-weighted prior."""
    sq = basis.squared_singular_values()
    if sq.size == 0 or sq[0] <= 0:
        return np.ones(sq.size)
    return np.sqrt(np.clip(sq, 0.0, None) / sq[0])


def ridge_solve(A: np.ndarray, B: np.ndarray, rho: float = RIDGE,
                col_scale: np.ndarray | None = None):
    """Batched ridge least squares ``argmin |A x - B|^2 + lam |x / col_scale|^2``.

    ``lam = rho * s_max^2`` where ``s_max`` is the largest singular value of the
    (column-scaled) system. ``A`` is ``(..., rows, r)`` and ``B`` is
    ``(..., rows, k)``. Returns ``(x, rank)`` with ``x`` of shape ``(..., r, k)``.
    """
    if col_scale is not None:
        A = A * col_scale
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    smax = s[..., :1]
    lam = rho * smax**2
    denom = s**2 + lam
    filt = np.divide(s, denom, out=np.zeros_like(s), where=denom > 0)
    x = np.swapaxes(Vt, -1, -2) @ (filt[..., :, None] * (np.swapaxes(U, -1, -2) @ B))
    if col_scale is not None:
        x = x * col_scale[:, None]
    rank = np.sum(s > 1e-10 * np.where(smax > 0, smax, 1.0), axis=-1)
    rank = np.where(smax[..., 0] > 0, rank, 0)
    return x, rank


def _measurement_system(basis: PodBasis, positions: np.ndarray, values: np.ndarray):
    """Restricted mode rows and centered targets, both ``(k, 2, ...)``."""
    k = positions.shape[0]
    phi = interpolate_rows(basis.modes, basis.grid, positions)
    mean = interpolate_rows(basis.mean_field, basis.grid, positions)
    phi = np.stack([phi[:k], phi[k:]], axis=1)
    mean = np.stack([mean[:k], mean[k:]], axis=1)
    return phi, values - mean


def fit_coefficients(measurements, basis: PodBasis, *, prior: str | None = None,
                     rho: float = RIDGE) -> CoefficientFit:
    """Fit mode amplitudes to point velocity measurements taken at one time.

    Each measurement contributes two rows (u and v) built by bilinear
    interpolation of the modes. The regularization is isotropic by default;
    ``prior="energy"`` weights mode ``k`` by ``(sigma_1 / sigma_k)^2`` so
    unresolved directions fall back onto the low-energy modes.
    """
    measurements = list(measurements)
    if not measurements:
        raise ValueError("need at least one measurement")
    pos = np.array([m.position for m in measurements], dtype=float)
    vel = np.array([m.velocity for m in measurements], dtype=float)
    if not basis.grid.contains(pos):
        raise DomainError("measurement position outside the grid domain")
    if basis.r == 0:
        return CoefficientFit(np.zeros(0), False, 0.0)
    phi, target = _measurement_system(basis, pos, vel)
    A = phi.reshape(-1, basis.r)
    b = target.reshape(-1, 1)
    scale = _energy_scale(basis) if prior == "energy" else None
    x, rank = ridge_solve(A, b, rho, scale)
    a = x[:, 0]
    return CoefficientFit(a, bool(rank < basis.r), float(np.linalg.norm(A @ a - b[:, 0])))


def reconstruct(a, basis: PodBasis) -> np.ndarray:
    """Full-field estimate ``mean + Phi a``; ``a`` may be ``(r,)`` or ``(r, n)``."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] != basis.r:
        raise ValueError(f"expected {basis.r} coefficients, got {a.shape[0]}")
    if a.ndim == 1:
        return basis.mean_field + basis.modes @ a
    return basis.mean_field[:, None] + basis.modes @ a


def field_error(u_hat, u_star, norm: str = "entrywise-abs-sum") -> float:
    u_hat = np.asarray(u_hat, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    if u_hat.shape != u_star.shape:
        raise ValueError(f"shape mismatch {u_hat.shape} vs {u_star.shape}")
    diff = u_hat - u_star
    if norm == "entrywise-abs-sum":
        return float(np.abs(diff).sum())
    if norm == "rms":
        return float(np.sqrt(np.mean(diff**2)))
    raise ValueError(f"unknown norm {norm!r}")


def _window_weights(n: int, policy: str, steady: bool, window: int,
                    history_weight: float) -> np.ndarray:
    """``(n, n)`` row weights: entry ``[i, j]`` weights measurement ``j`` in fit ``i``."""
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    if policy == "per-instant":
        return (i == j).astype(float)
    if steady:
        return (j <= i).astype(float)
    inside = (j <= i) & (j > i - window)
    return np.where(i == j, 1.0, np.where(inside, history_weight, 0.0))


def trajectory_reconstruction_error(traj, basis: PodBasis, truth: DoubleGyreParams,
                                    accumulation: str = "cumulative-window", *,
                                    window: int = 50, history_weight: float = 1e-6,
                                    prior_rho: float = 1e-6,
                                    check_domain: bool = True) -> TrajectoryError:
    """Reconstruction error accumulated along a sampled trajectory.

    At every sample the mobile sensor measures the true velocity. The fit for
    step ``i`` uses:

    * ``"per-instant"``: only measurement ``i`` with the isotropic ridge.
    * ``"cumulative-window"``, steady truth: every measurement up to ``i`` with
      equal weight (the field does not change, so they all describe it).
    * ``"cumulative-window"``, unsteady truth: measurement ``i`` at full weight
      plus the previous ``window - 1`` measurements at ``history_weight``,
      under the energy-weighted prior with ridge ``prior_rho``.

    ``e(t_i)`` is the entrywise absolute error over the whole grid and
    ``E = sum_i e(t_i)``.
    """
    if accumulation not in ACCUMULATION_POLICIES:
        raise ValueError(f"unknown accumulation policy {accumulation!r}")
    pos = np.asarray(traj.positions, dtype=float)
    t = np.asarray(traj.times, dtype=float)
    grid = basis.grid
    if check_domain and not grid.contains(pos, tol=1e-9):
        raise DomainError("trajectory leaves the grid domain")
    pos = np.column_stack([np.clip(pos[:, 0], *grid.x_range), np.clip(pos[:, 1], *grid.y_range)])
    n = pos.shape[0]
    r = basis.r

    truth_grid = grid_velocity(grid, t, truth)
    if r == 0:
        diff = basis.mean_field[:, None] - truth_grid
        per = np.abs(diff).sum(axis=0)
        return TrajectoryError(float(per.sum()), per, np.sqrt(np.mean(diff**2, axis=0)),
                               np.zeros((n, 0)), np.zeros(n, dtype=bool), accumulation)

    mu, mv = velocity_field(pos[:, 0], pos[:, 1], t, truth, check=False)
    phi, target = _measurement_system(basis, pos, np.column_stack([mu, mv]))

    steady = truth.steady
    unsteady_window = accumulation == "cumulative-window" and not steady
    w = np.sqrt(_window_weights(n, accumulation, steady, window, history_weight))
    if accumulation == "per-instant":
        A = phi
        b = target[:, :, None]
    else:
        # only columns that can carry weight for some step
        A = (w[:, :, None, None] * phi[None]).reshape(n, 2 * n, r)
        b = (w[:, :, None] * target[None]).reshape(n, 2 * n, 1)
    if unsteady_window:
        x, rank = ridge_solve(A, b, prior_rho, _energy_scale(basis))
    else:
        x, rank = ridge_solve(A, b, RIDGE)
    a = x[:, :, 0]
    diff = reconstruct(a.T, basis) - truth_grid
    per = np.abs(diff).sum(axis=0)
    return TrajectoryError(float(per.sum()), per, np.sqrt(np.mean(diff**2, axis=0)),
                           a, rank < r, accumulation)
