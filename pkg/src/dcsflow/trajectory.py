"""Quartic-spline trajectories through waypoints and their penalized optimization.

A plan visits ``g1``, the waypoints in order, then ``g2``; these ``m + 2``
knots split the path into ``m + 1`` segments of ``q`` time steps each.
Segment ``k`` is a quartic in normalized time ``s in [0, 1]`` fixed by

* its end knots (interpolated exactly),
* the velocities at both end knots (shared with the neighbouring segment,
  so the path is C1),
* a free control point that the path passes through at ``s = 1/2``.

The optimizer varies knot velocities, control points and segment durations;
knot interpolation is built in and needs no constraint.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .flow import DoubleGyreParams, GridSpec, X_RANGE, Y_RANGE, velocity_field
from .pod import PodBasis
from .reconstruct import trajectory_reconstruction_error
from .seeds import derive_seed

__all__ = [
    "FeasibilityError",
    "OptimizationFailure",
    "SegmentPlan",
    "Trajectory",
    "CostWeights",
    "CostBreakdown",
    "Limits",
    "OptimizerOptions",
    "OptimizationResult",
    "ShuffleResult",
    "build_spline",
    "energy_cost",
    "total_cost",
    "constraint_violation",
    "optimize_trajectory",
    "shuffle_and_optimize",
]

log = logging.getLogger(__name__)

# monomial coefficients (s^0..s^4) of the segment basis functions
_HERMITE = np.array([
    [1.0, 0.0, -3.0, 2.0, 0.0],   # start position
    [0.0, 1.0, -2.0, 1.0, 0.0],   # start derivative
    [0.0, 0.0, 3.0, -2.0, 0.0],   # end position
    [0.0, 0.0, -1.0, 1.0, 0.0],   # end derivative
])
_BUBBLE = np.array([0.0, 0.0, 16.0, -32.0, 16.0])  # 16 s^2 (1 - s)^2, equals 1 at s = 1/2


class FeasibilityError(ValueError):
    """A planning request that no trajectory can satisfy."""


class OptimizationFailure(RuntimeError):
    def __init__(self, message, trials=None):
        super().__init__(message)
        self.trials = trials or []


@dataclass
class SegmentPlan:
    """Knot sequence ``g1, y_1 .. y_m, g2`` with ``q`` steps per segment."""

    knots: np.ndarray
    durations: np.ndarray
    q: int = 10
    t0: float = 0.0

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float).reshape(-1, 2)
        self.durations = np.asarray(self.durations, dtype=float).reshape(-1)
        if self.knots.shape[0] < 2:
            raise ValueError("a plan needs at least the start and goal knots")
        if self.durations.size != self.knots.shape[0] - 1:
            raise ValueError("need one duration per segment")
        if self.q < 1:
            raise ValueError("steps per segment must be at least 1")
        if not np.all(self.durations > 0):
            raise ValueError("segment durations must be positive")

    @classmethod
    def through(cls, g1, waypoints, g2, durations, q: int = 10, t0: float = 0.0):
        wp = np.asarray(waypoints, dtype=float).reshape(-1, 2)
        knots = np.vstack([np.asarray(g1, float).reshape(1, 2), wp, np.asarray(g2, float).reshape(1, 2)])
        return cls(knots, durations, q, t0)

    @property
    def m(self) -> int:
        return self.knots.shape[0] - 2

    @property
    def n_segments(self) -> int:
        return self.knots.shape[0] - 1

    @property
    def n_steps(self) -> int:
        return self.n_segments * self.q


@dataclass
class Trajectory:
    times: np.ndarray          # (N,)
    positions: np.ndarray      # (N, 2)
    velocities: np.ndarray     # (N, 2), analytic derivative
    coefficients: np.ndarray   # (m+1, 5, 2), monomials in normalized segment time
    durations: np.ndarray      # (m+1,)
    knot_index: np.ndarray     # sample index of every knot
    knots: np.ndarray          # (m+2, 2)

    @property
    def t_f(self) -> float:
        return float(self.times[-1] - self.times[0])

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.velocities, axis=1)


def _segment_coefficients(knots, knot_vel, mids, durations) -> np.ndarray:
    d = durations[:, None]
    P0, P1 = knots[:-1], knots[1:]
    D0, D1 = d * knot_vel[:-1], d * knot_vel[1:]
    cubic = (_HERMITE[0][None, :, None] * P0[:, None] + _HERMITE[1][None, :, None] * D0[:, None]
             + _HERMITE[2][None, :, None] * P1[:, None] + _HERMITE[3][None, :, None] * D1[:, None])
    half = 0.5 * (P0 + P1) + 0.125 * (D0 - D1)
    return cubic + _BUBBLE[None, :, None] * (mids - half)[:, None]


def _sample_matrices(q: int):
    s = np.arange(q + 1) / q
    V = np.vander(s, 5, increasing=True)
    dV = np.zeros_like(V)
    dV[:, 1:] = V[:, :-1] * np.arange(1, 5)
    return V, dV


def build_spline(plan: SegmentPlan, knot_velocities, midpoints) -> Trajectory:
    """Sample the C1 quartic spline defined by ``plan`` and its free controls.

    ``knot_velocities`` is ``(m+2, 2)`` and ``midpoints`` is ``(m+1, 2)``;
    segment ``k`` passes through ``midpoints[k]`` halfway through its duration.
    """
    K = plan.knots
    Vk = np.asarray(knot_velocities, dtype=float).reshape(K.shape)
    M = np.asarray(midpoints, dtype=float).reshape(plan.n_segments, 2)
    d = plan.durations
    if not np.all(d > 0):
        raise ValueError("segment durations must be positive")
    coef = _segment_coefficients(K, Vk, M, d)
    q = plan.q
    Vs, dVs = _sample_matrices(q)
    pos = np.einsum("sn,knc->ksc", Vs[:-1], coef).reshape(-1, 2)
    vel = (np.einsum("sn,knc->ksc", dVs[:-1], coef) / d[:, None, None]).reshape(-1, 2)
    starts = plan.t0 + np.concatenate([[0.0], np.cumsum(d)])
    times = (starts[:-1, None] + d[:, None] * (np.arange(q) / q)[None, :]).ravel()
    # knots are set exactly rather than summed from monomials
    pos[::q] = K[:-1]
    pos = np.vstack([pos, K[-1:]])
    vel = np.vstack([vel, Vk[-1:]])
    times = np.append(times, starts[-1])
    return Trajectory(times, pos, vel, coef, d.copy(), np.arange(plan.n_segments + 1) * q, K.copy())


def energy_cost(traj: Trajectory, flow: DoubleGyreParams | None) -> float:
    """Sum over samples of the squared vehicle velocity relative to the flow.

    ``flow=None`` means still water.
    """
    if flow is None:
        rel = traj.velocities
    else:
        u, v = velocity_field(np.clip(traj.positions[:, 0], *X_RANGE),
                              np.clip(traj.positions[:, 1], *Y_RANGE),
                              traj.times, flow, check=False)
        rel = traj.velocities - np.column_stack([u, v])
    return float(np.sum(rel * rel))


@dataclass(frozen=True)
class CostWeights:
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0

    def __post_init__(self):
        w = (self.alpha1, self.alpha2, self.alpha3)
        if min(w) < 0 or max(w) <= 0:
            raise ValueError(f"weights must be nonnegative with one positive, got {w}")

    @property
    def total(self) -> float:
        return self.alpha1 + self.alpha2 + self.alpha3


@dataclass
class CostBreakdown:
    D: float
    E: float
    F: float
    J: float
    weights: CostWeights = field(default_factory=CostWeights)

    def to_dict(self) -> dict:
        return {"D": self.D, "E": self.E, "F": self.F, "J": self.J, "weights": asdict(self.weights)}


def _combine(w: CostWeights, D: float, E: float, F: float) -> float:
    return w.alpha1 * D + w.alpha2 * E + w.alpha3 * F


def total_cost(traj: Trajectory, basis: PodBasis | None, truth: DoubleGyreParams | None,
               weights: CostWeights, accumulation: str = "cumulative-window",
               per_step: list | None = None) -> CostBreakdown:
    """``J = a1 D + a2 E + a3 F`` for a sampled trajectory.

    ``E`` needs a basis and a truth flow; with ``basis=None`` it is reported
    as 0, which is only allowed when ``alpha2 == 0``. When ``per_step`` is a
    list, the per-sample errors ``e(t_i)`` are appended to it.
    """
    D = traj.t_f
    F = energy_cost(traj, truth)
    if basis is None or truth is None:
        if weights.alpha2 > 0:
            raise ValueError("reconstruction weight needs a basis and a truth flow")
        E = 0.0
    else:
        err = trajectory_reconstruction_error(traj, basis, truth, accumulation, check_domain=False)
        E = err.E
        if per_step is not None:
            per_step.extend(err.per_step.tolist())
    return CostBreakdown(D, E, F, _combine(weights, D, E, F), weights)


@dataclass(frozen=True)
class Limits:
    v_max: float = 0.7
    x_range: tuple[float, float] = X_RANGE
    y_range: tuple[float, float] = Y_RANGE

    def __post_init__(self):
        if not self.v_max > 0:
            raise ValueError("speed limit must be positive")


@dataclass(frozen=True)
class OptimizerOptions:
    q: int = 10
    mu0: float = 1e3
    mu_growth: float = 10.0
    max_outer: int = 12
    max_inner: int = 150
    max_steps: int = 450
    violation_tol: float = 1e-4
    cost_rtol: float = 1e-6
    fd_step: float = 1e-6
    margin: float = 1e-2
    min_duration: float = 1e-3
    init_speed_fraction: float = 0.8
    accumulation: str = "cumulative-window"


@dataclass
class OptimizationResult:
    trajectory: Trajectory
    cost: CostBreakdown
    converged: bool
    violation: float
    iterations: int
    history: list[float]
    sequence: list[int] = field(default_factory=list)
    per_step_error: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "cost": self.cost.to_dict(),
            "converged": self.converged,
            "violation": self.violation,
            "iterations": self.iterations,
            "sequence": [int(i) for i in self.sequence],
            "durations": self.trajectory.durations.tolist(),
            "knots": self.trajectory.knots.tolist(),
            "t_f": self.trajectory.t_f,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path) -> None:
        tr = self.trajectory
        e = self.per_step_error or [0.0] * tr.times.size
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y", "vx", "vy", "e"])
            for i in range(tr.times.size):
                w.writerow([repr(float(v)) for v in (tr.times[i], *tr.positions[i],
                                                     *tr.velocities[i], e[i])])


def constraint_violation(traj: Trajectory, limits: Limits, margin: float = 0.0) -> np.ndarray:
    """Nonnegative violations: speed excess per sample, box excess per sample
    (knots exempt from ``margin``), and non-increasing time steps."""
    lim = limits.v_max * (1.0 - margin)
    speed = np.maximum(traj.speeds() - lim, 0.0)
    shrink = np.full(traj.times.size, margin)
    shrink[traj.knot_index] = 0.0
    x, y = traj.positions[:, 0], traj.positions[:, 1]
    box = np.maximum.reduce([
        limits.x_range[0] + shrink - x, x - limits.x_range[1] + shrink,
        limits.y_range[0] + shrink - y, y - limits.y_range[1] + shrink,
        np.zeros_like(x),
    ])
    steps = np.maximum(-np.diff(traj.times), 0.0)
    return np.concatenate([speed, box, steps])


class _Problem:
    """Penalized objective over the packed decision vector."""

    def __init__(self, knots, basis, truth, weights, limits, opts, t0):
        self.knots = knots
        self.basis = basis
        self.truth = truth
        self.weights = weights
        self.limits = limits
        self.opts = opts
        self.t0 = t0
        self.ns = knots.shape[0] - 1
        self.scale = weights.total
        self.use_E = weights.alpha2 > 0

    def unpack(self, x):
        nk = self.knots.shape[0]
        V = x[: 2 * nk].reshape(nk, 2)
        M = x[2 * nk: 2 * nk + 2 * self.ns].reshape(self.ns, 2)
        d = x[2 * nk + 2 * self.ns:]
        return V, M, d

    def trajectory(self, x) -> Trajectory:
        V, M, d = self.unpack(x)
        plan = SegmentPlan(self.knots, d, self.opts.q, self.t0)
        return build_spline(plan, V, M)

    def cost(self, traj, per_step=None) -> CostBreakdown:
        basis = self.basis if self.use_E else None
        return total_cost(traj, basis, self.truth, self.weights, self.opts.accumulation, per_step)

    def penalty(self, traj, x) -> float:
        v = constraint_violation(traj, self.limits, self.opts.margin)
        d = self.unpack(x)[2]
        low = np.maximum(self.opts.min_duration - d, 0.0)
        return float(v @ v + low @ low)

    def violation(self, traj) -> float:
        """Largest violation of the true (unshrunk) limits."""
        return float(constraint_violation(traj, self.limits).max(initial=0.0))

    def phi(self, x, mu) -> float:
        if np.any(self.unpack(x)[2] <= 0):
            return np.inf
        traj = self.trajectory(x)
        return self.cost(traj).J + mu * self.scale * self.penalty(traj, x)


def _gradient(f, x, f0, rel_h):
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_h * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = f(xp), f(xm)
        if np.isfinite(fp) and np.isfinite(fm):
            g[i] = (fp - fm) / (2.0 * h)
        elif np.isfinite(fp):
            g[i] = (fp - f0) / h
        elif np.isfinite(fm):
            g[i] = (f0 - fm) / h
        else:
            g[i] = 0.0
    return g


def _descend(f, x, opts: OptimizerOptions, history: list[float], max_steps: int):
    """Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.

    Only steps that lower ``f`` are accepted, so ``history`` is nonincreasing.
    Stops once the relative decrease stays below ``cost_rtol`` for three
    consecutive steps; returns ``(x, f(x), steps, settled)``.
    """
    fx = f(x)
    history.append(fx)
    g = _gradient(f, x, fx, opts.fd_step)
    step = 1e-2 * max(1.0, np.linalg.norm(x)) / max(np.linalg.norm(g), 1e-300)
    quiet = 0
    it = 0
    settled = False
    for it in range(1, max_steps + 1):
        gg = g @ g
        if gg == 0.0:
            settled = True
            break
        a = step
        for _ in range(60):
            xn = x - a * g
            fn = f(xn)
            if fn <= fx - 1e-4 * a * gg:
                break
            a *= 0.5
        else:
            break
        gn = _gradient(f, xn, fn, opts.fd_step)
        sx, sy = xn - x, gn - g
        sty = sx @ sy
        step = (sx @ sx) / sty if sty > 0 else 2.0 * a
        drop = fx - fn
        x, fx, g = xn, fn, gn
        history.append(fx)
        quiet = quiet + 1 if drop <= opts.cost_rtol * max(abs(fx), 1e-12) else 0
        if quiet >= 3:
            settled = True
            break
    return x, fx, it, settled


def _check_feasible(knots, limits: Limits):
    for k in range(knots.shape[0]):
        px, py = knots[k]
        if not (limits.x_range[0] <= px <= limits.x_range[1]
                and limits.y_range[0] <= py <= limits.y_range[1]):
            leg = max(k - 1, 0)
            raise FeasibilityError(
                f"leg {leg} -> {leg + 1}: knot {k} at ({px:.6g}, {py:.6g}) lies outside the box")
    if not np.all(np.isfinite(knots)):
        raise FeasibilityError("non-finite knot coordinates")


def _initial_guess(knots, limits: Limits, opts: OptimizerOptions):
    """Straight legs at a fraction of the speed limit."""
    speed = opts.init_speed_fraction * limits.v_max
    legs = np.diff(knots, axis=0)
    length = np.linalg.norm(legs, axis=1)
    d = np.maximum(length / speed, 10.0 * opts.min_duration)
    leg_vel = legs / d[:, None]
    V = np.zeros_like(knots)
    V[0], V[-1] = leg_vel[0], leg_vel[-1]
    # average neighbouring leg velocities at interior knots
    V[1:-1] = 0.5 * (leg_vel[:-1] + leg_vel[1:])
    M = 0.5 * (knots[:-1] + knots[1:])
    return np.concatenate([V.ravel(), M.ravel(), d])


def optimize_trajectory(sequence, g1, g2, weights: CostWeights = CostWeights(),
                        limits: Limits = Limits(), opts: OptimizerOptions = OptimizerOptions(), *,
                        basis: PodBasis | None = None, truth: DoubleGyreParams | None = None,
                        t0: float = 0.0, x0: np.ndarray | None = None) -> OptimizationResult:
    """Locally optimal trajectory ``g1 -> sequence -> g2``.

    Exterior quadratic penalties on speed, box and duration violations are
    tightened by ``mu_growth`` per outer round; each round runs
    :func:`_descend` until the relative cost change drops below ``cost_rtol``.
    The run has converged when a settled round ends with every violation
    below ``violation_tol``; a feasible round that has not settled is followed
    by another at the same weight. ``max_steps`` bounds the descent steps of
    the whole run, after which the current iterate is returned unconverged. The penalty is multiplied by the weight sum so that
    rescaling all weights rescales the whole objective. Internally the speed
    limit and the box (away from knots) are tightened by ``margin`` so the
    returned trajectory meets the true limits strictly.

    ``truth=None`` plans in still water; ``basis`` is needed when ``alpha2 > 0``.
    """
    knots = np.vstack([np.asarray(g1, float).reshape(1, 2),
                       np.asarray(sequence, float).reshape(-1, 2),
                       np.asarray(g2, float).reshape(1, 2)])
    _check_feasible(knots, limits)
    if weights.alpha2 > 0 and (basis is None or truth is None):
        raise ValueError("reconstruction weight needs a basis and a truth flow")
    prob = _Problem(knots, basis, truth, weights, limits, opts, t0)
    x = _initial_guess(knots, limits, opts) if x0 is None else np.asarray(x0, dtype=float).copy()

    history: list[float] = []
    mu = opts.mu0
    converged = False
    total_it = 0
    for outer in range(opts.max_outer):
        budget = min(opts.max_inner, opts.max_steps - total_it)
        if budget <= 0:
            break
        x, _, it, settled = _descend(lambda z: prob.phi(z, mu), x, opts, history, budget)
        total_it += it
        traj = prob.trajectory(x)
        viol = prob.violation(traj)
        log.debug("round %d: mu %.3g, J %.8g, violation %.3g, %d steps", outer, mu,
                  prob.cost(traj).J, viol, it)
        if viol < opts.violation_tol:
            if settled:
                converged = True
                break
            continue  # feasible but still moving: keep descending at this weight
        mu *= opts.mu_growth

    traj = prob.trajectory(x)
    per_step: list[float] = []
    final = total_cost(traj, basis, truth, weights, opts.accumulation, per_step) \
        if basis is not None and truth is not None else prob.cost(traj)
    true_viol = float(constraint_violation(traj, limits).max(initial=0.0))
    return OptimizationResult(traj, final, converged, true_viol, total_it, history,
                              per_step_error=per_step)


@dataclass
class ShuffleResult:
    best: OptimizationResult
    best_index: int
    trials: list[OptimizationResult | None]
    orders: list[list[int]]
    errors: list[str | None]

    def costs(self) -> list[dict | None]:
        return [None if t is None else t.cost.to_dict() for t in self.trials]


def _optimize_order(args):
    pts, order, g1, g2, weights, limits, opts, basis, truth, t0 = args
    try:
        res = optimize_trajectory(pts[order], g1, g2, weights, limits, opts,
                                  basis=basis, truth=truth, t0=t0)
    except (FeasibilityError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"
    res.sequence = list(order)
    return res, None


def shuffle_and_optimize(waypoints, c2: int, g1, g2, weights: CostWeights = CostWeights(),
                         limits: Limits = Limits(), seed: int = 0,
                         opts: OptimizerOptions = OptimizerOptions(), *,
                         basis: PodBasis | None = None, truth: DoubleGyreParams | None = None,
                         t0: float = 0.0, workers: int = 1) -> ShuffleResult:
    """Optimize ``c2`` visiting orders and keep the cheapest.

    Trial 0 keeps the given order; later trials use seeded permutations.
    Converged trials are preferred; among them the lowest ``J`` wins with the
    earlier trial breaking ties. ``workers > 1`` runs trials in separate
    processes; results do not depend on the worker count.
    """
    if c2 < 1:
        raise ValueError("need at least one shuffle")
    pts = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    orders = [list(range(len(pts)))]
    for i in range(1, c2):
        perm = np.random.default_rng(derive_seed(seed, "shuffle", i)).permutation(len(pts))
        orders.append([int(k) for k in perm])
    jobs = [(pts, order, g1, g2, weights, limits, opts, basis, truth, t0) for order in orders]
    if workers > 1 and c2 > 1:
        with ProcessPoolExecutor(max_workers=min(workers, c2)) as ex:
            outcomes = list(ex.map(_optimize_order, jobs))
    else:
        outcomes = [_optimize_order(job) for job in jobs]
    trials = [o[0] for o in outcomes]
    errors = [o[1] for o in outcomes]
    done = [(i, t) for i, t in enumerate(trials) if t is not None]
    if not done:
        raise OptimizationFailure("every shuffled sequence failed", errors)
    pool = [(i, t) for i, t in done if t.converged] or done
    best_i, best = min(pool, key=lambda it: (it[1].cost.J, it[0]))
    return ShuffleResult(best, best_i, trials, orders, errors)


def box_from_grid(grid: GridSpec, v_max: float = 0.7) -> Limits:
    return Limits(v_max, tuple(grid.x_range), tuple(grid.y_range))
