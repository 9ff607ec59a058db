"""Random measurement matrices, basis pursuit, and best-of-trials waypoint selection."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .flow import SnapshotMatrix
from .pod import PodBasis
from .reconstruct import RIDGE, ridge_solve
from .seeds import derive_seed

__all__ = [
    "MEASUREMENT_KINDS",
    "MeasurementMatrix",
    "SparseSolution",
    "TrialRecord",
    "WaypointSet",
    "SelectionError",
    "random_measurement_matrix",
    "soft_threshold",
    "solve_basis_pursuit",
    "score_waypoint_set",
    "select_waypoints",
    "transform_basis",
]

log = logging.getLogger(__name__)

MEASUREMENT_KINDS = ("delta-impulse", "gaussian", "bernoulli")


class SelectionError(RuntimeError):
    def __init__(self, message, trials=None):
        super().__init__(message)
        self.trials = trials or []


@dataclass
class MeasurementMatrix:
    """Subsampling operator ``C`` (``m x n``).

    Delta-impulse matrices store only the selected column per row; dense kinds
    store their entries, scaled to variance ``1 / m``.
    """

    kind: str
    m: int
    n: int
    seed: int
    columns: np.ndarray | None = None
    entries: np.ndarray | None = None

    def to_dense(self) -> np.ndarray:
        if self.kind == "delta-impulse":
            C = np.zeros((self.m, self.n))
            C[np.arange(self.m), self.columns] = 1.0
            return C
        return self.entries.copy()

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "delta-impulse":
            return x[self.columns]
        return self.entries @ x

    def top_columns(self, k: int) -> np.ndarray:
        """The ``k`` columns this matrix weights most (selected columns for delta)."""
        if self.kind == "delta-impulse":
            return self.columns[:k].copy()
        norms = np.linalg.norm(self.entries, axis=0)
        return np.sort(np.argsort(-norms, kind="stable")[:k])


def random_measurement_matrix(kind: str, m: int, n: int, seed: int) -> MeasurementMatrix:
    if kind not in MEASUREMENT_KINDS:
        raise ValueError(f"unknown measurement kind {kind!r}")
    if not 1 <= m < n:
        raise ValueError(f"subsampling needs 1 <= m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    if kind == "delta-impulse":
        return MeasurementMatrix(kind, m, n, seed, columns=rng.choice(n, size=m, replace=False))
    if kind == "gaussian":
        entries = rng.standard_normal((m, n)) / np.sqrt(m)
    else:
        entries = rng.choice([-1.0, 1.0], size=(m, n)) / np.sqrt(m)
    return MeasurementMatrix(kind, m, n, seed, entries=entries)


@dataclass
class SparseSolution:
    s_hat: np.ndarray
    residual: float
    iterations: int
    converged: bool
    gamma: float


def soft_threshold(x: np.ndarray, thresh: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def _kkt_violation(grad: np.ndarray, s: np.ndarray, g: float) -> float:
    """Largest deviation from the subgradient optimality conditions at ``s``."""
    on = s != 0
    v_on = np.abs(grad[on] + g * np.sign(s[on]))
    v_off = np.maximum(np.abs(grad[~on]) - g, 0.0)
    return float(max(v_on.max(initial=0.0), v_off.max(initial=0.0)))


def _polish(Theta: np.ndarray, y: np.ndarray, s: np.ndarray, g: float):
    """Exact penalized solution on the support and signs of ``s``, if consistent."""
    on = np.flatnonzero(s)
    if on.size == 0 or on.size > Theta.shape[0]:
        return None
    sign = np.sign(s[on])
    A = Theta[:, on]
    G = A.T @ A
    try:
        x = np.linalg.solve(G, A.T @ y - g * sign)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.sign(x) == sign):
        return None
    out = np.zeros_like(s)
    out[on] = x
    return out


def solve_basis_pursuit(Theta: np.ndarray, y: np.ndarray, eps_noise: float = 0.0,
                        gamma: float | None = None, *, max_iter: int = 10_000,
                        tol_residual: float = 1e-6, tol_step: float = 1e-8,
                        shrink: float = 0.1, kkt_tol: float = 1e-4,
                        polish_every: int = 10) -> SparseSolution:
    """Minimum-l1 solution of ``Theta s = y`` (up to ``eps_noise``).

    Solves the penalized problem ``0.5 |Theta s - y|^2 + g |s|_1`` with
    accelerated proximal gradient steps (backtracking on the Lipschitz
    constant, adaptive momentum restart) while ``g`` shrinks geometrically
    from ``|Theta^T y|_inf / 2`` down to ``gamma``. Each stage is warm-started
    from the previous one and ends once the subgradient conditions hold to
    ``kkt_tol * g``. A settled stage (last step below ``tol_step``) counts as
    converged when its residual is at most ``max(eps_noise, tol_residual |y|)``.
    With ``eps_noise > 0`` the first converged stage is returned, i.e. the
    largest penalty that fits the data to the noise level.

    Every ``polish_every`` iterations the stage problem is also solved exactly
    on the current support and sign pattern; the result replaces the iterate
    when it satisfies the optimality conditions.

    ``gamma`` defaults to ``1e-8 * |Theta^T y|_inf``.
    """
    Theta = np.asarray(Theta, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.any(Theta):
        raise ValueError("Theta must be nonzero")
    if eps_noise < 0:
        raise ValueError("eps_noise must be nonnegative")
    n = Theta.shape[1]
    s = np.zeros(n)
    ynorm = np.linalg.norm(y)
    corr = np.max(np.abs(Theta.T @ y))
    target = 1e-8 * corr if gamma is None else float(gamma)
    if ynorm == 0 or corr <= target:
        return SparseSolution(s, float(ynorm), 1, bool(ynorm <= eps_noise), float(target))

    res_tol = max(eps_noise, tol_residual * ynorm)
    L = np.linalg.norm(Theta, "fro") ** 2 / min(Theta.shape) * 1e-2
    g = max(0.5 * corr, target)
    it = 0
    converged = False
    while True:
        z = s.copy()
        tk = 1.0
        stationary = False
        while it < max_iter:
            it += 1
            rz = Theta @ z - y
            grad = Theta.T @ rz
            fz = 0.5 * rz @ rz
            while True:
                s_new = soft_threshold(z - grad / L, g / L)
                d = s_new - z
                r_new = Theta @ s_new - y
                if 0.5 * r_new @ r_new <= fz + grad @ d + 0.5 * L * d @ d + 1e-15 * fz:
                    break
                L *= 2.0
            step = np.linalg.norm(s_new - s)
            tk_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            if (z - s_new) @ (s_new - s) > 0:
                # momentum is fighting the descent direction; restart it
                tk_new = 1.0
                z = s_new.copy()
            else:
                z = s_new + ((tk - 1.0) / tk_new) * (s_new - s)
            s, tk = s_new, tk_new
            stationary = _kkt_violation(Theta.T @ r_new, s, g) <= kkt_tol * g
            if not stationary and it % polish_every == 0:
                cand = _polish(Theta, y, s, g)
                if cand is not None:
                    r_c = Theta @ cand - y
                    if _kkt_violation(Theta.T @ r_c, cand, g) <= kkt_tol * g:
                        # exact stage minimizer: nothing left to move
                        s, z, stationary, step = cand, cand.copy(), True, 0.0
            if stationary or step == 0.0:
                break
        residual = float(np.linalg.norm(Theta @ s - y))
        settled = stationary and step <= tol_step * max(np.linalg.norm(s), 1.0)
        converged = settled and residual <= res_tol
        if converged and (eps_noise > 0 or g <= target):
            break
        if it >= max_iter or g <= target:
            break
        g = max(g * shrink, target)
    return SparseSolution(s, float(np.linalg.norm(Theta @ s - y)), it, bool(converged), float(g))


def transform_basis(X: SnapshotMatrix, rtol: float = 1e-10, *, svd=None) -> np.ndarray:
    """Left singular vectors of the centered data with ``sigma > rtol * sigma_1``.

    Directions with zero singular value are an arbitrary completion and only
    make the sparse problem wider, so they are dropped. ``svd`` may carry a
    precomputed ``(U, s)`` pair.
    """
    U, s = svd if svd is not None else np.linalg.svd(X.data, full_matrices=False)[:2]
    if s.size == 0 or s[0] <= 0:
        return U[:, :1]
    return U[:, : int(np.sum(s > rtol * s[0]))]


def _fit_error(ids, basis: PodBasis, X: SnapshotMatrix) -> tuple[float, bool]:
    ids = np.asarray(ids, dtype=int)
    if basis.r == 0:
        return float(np.abs(X.data).sum()), False
    rows = basis.grid.state_rows(ids)
    A = basis.modes[rows]
    coef, rank = ridge_solve(A, X.data[rows], RIDGE)
    if rank == basis.r:
        # well-posed: plain least squares, no ridge bias
        coef = np.linalg.lstsq(A, X.data[rows], rcond=None)[0]
    err = np.abs(basis.modes @ coef - X.data).sum()
    return float(err), bool(rank < basis.r)


def score_waypoint_set(ids, basis: PodBasis, X: SnapshotMatrix) -> float:
    """Entrywise absolute reconstruction error over every snapshot.

    For each snapshot the mode amplitudes are fitted to the u and v values at
    ``ids`` only (least squares, or an isotropic ridge when the restricted
    modes lose column rank); the whole centered field is then rebuilt and
    compared with the truth.
    """
    ids = np.asarray(ids, dtype=int)
    if ids.size == 0 or np.unique(ids).size != ids.size:
        raise ValueError("waypoint ids must be nonempty and distinct")
    if ids.min() < 0 or ids.max() >= basis.grid.n_loc:
        raise ValueError("waypoint id outside the grid")
    return _fit_error(ids, basis, X)[0]


@dataclass
class TrialRecord:
    index: int
    ids: list[int]
    error: float
    bp_residual: float
    bp_iterations: int
    bp_converged: bool
    underdetermined: bool


@dataclass
class WaypointSet:
    ids: list[int]
    positions: list[list[float]]
    recon_error: float
    seed: int
    trial_index: int
    trials: list[TrialRecord] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.ids)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "ids": [int(i) for i in self.ids],
            "positions": [[float(v) for v in p] for p in self.positions],
            "recon_error": float(self.recon_error),
            "seed": int(self.seed),
            "trial_index": int(self.trial_index),
            "trials": [t.error for t in self.trials],
            "trial_details": [asdict(t) for t in self.trials],
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "WaypointSet":
        trials = [TrialRecord(**t) for t in d.get("trial_details", [])]
        return cls(list(d["ids"]), [list(p) for p in d["positions"]], float(d["recon_error"]),
                   int(d["seed"]), int(d.get("trial_index", 0)), trials)

    @classmethod
    def from_json(cls, path) -> "WaypointSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def select_waypoints(X: SnapshotMatrix, basis: PodBasis, m: int, c1: int = 20, seed: int = 0,
                     *, kind: str = "delta-impulse", snapshot: int = 0,
                     transform: np.ndarray | None = None, eps_noise: float = 0.0,
                     gamma: float | None = None, max_iter: int = 10_000) -> WaypointSet:
    """Best of ``c1`` randomized compressed-sensing trials.

    Every trial draws a measurement matrix over grid locations, solves basis
    pursuit for the chosen snapshot in the SVD transform basis, takes the
    locations the matrix samples as the candidate set, and scores that set
    against all snapshots with :func:`score_waypoint_set`. The lowest error
    among trials whose basis pursuit converged wins; ties go to the earlier
    trial.
    """
    grid = X.grid
    if not 1 <= m < grid.n_loc:
        raise ValueError(f"waypoint count must satisfy 1 <= m < {grid.n_loc}, got {m}")
    if c1 < 1:
        raise ValueError("need at least one trial")
    if not -X.times.count <= snapshot < X.times.count:
        raise ValueError(f"snapshot index {snapshot} out of range")
    Psi = transform_basis(X) if transform is None else transform
    n = grid.n_loc
    x = X.data[:, snapshot]
    x_u, x_v = x[:n], x[n:]

    trials: list[TrialRecord] = []
    for i in range(c1):
        C = random_measurement_matrix(kind, m, n, derive_seed(seed, "select", i))
        Theta = np.vstack([C.apply(Psi[:n]), C.apply(Psi[n:])])
        y = np.concatenate([C.apply(x_u), C.apply(x_v)])
        if Theta.any():
            sol = solve_basis_pursuit(Theta, y, eps_noise, gamma, max_iter=max_iter)
        else:
            # e.g. a corner node, where every mode vanishes
            ynorm = float(np.linalg.norm(y))
            sol = SparseSolution(np.zeros(Psi.shape[1]), ynorm, 0, ynorm <= eps_noise, 0.0)
        ids = C.top_columns(m)
        err, under = _fit_error(ids, basis, X)
        trials.append(TrialRecord(i, [int(v) for v in ids], float(err), float(sol.residual),
                                  int(sol.iterations), bool(sol.converged), bool(under)))
        log.debug("trial %d: error %.6g, bp residual %.3g (%s)", i, err, sol.residual,
                  "converged" if sol.converged else "not converged")

    eligible = [t for t in trials if t.bp_converged]
    if not eligible:
        raise SelectionError("basis pursuit failed to converge in every trial", trials)
    best = min(eligible, key=lambda t: (t.error, t.index))
    return WaypointSet(best.ids, grid.positions(best.ids).tolist(), best.error, seed,
                       best.index, trials)
