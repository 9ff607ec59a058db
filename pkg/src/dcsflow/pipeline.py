"""End-to-end runs: snapshots, POD, waypoint selection, planning, evaluation.

A run is driven by one JSON config document and writes every stage artifact
plus ``manifest.json`` (embedded config, its hash, seeds, file hashes) into
the output directory. Nothing time-dependent is written, so two runs of the
same config produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import io
from .flow import DoubleGyreParams, GridSpec, SnapshotMatrix, TimeGrid, build_snapshot_matrix, grid_velocity
from .pod import PodBasis, pod_covariance, pod_svd
from .reconstruct import ACCUMULATION_POLICIES, reconstruct, trajectory_reconstruction_error
from .seeds import derive_seed
from .sparse import MEASUREMENT_KINDS, SelectionError, WaypointSet, select_waypoints, transform_basis
from .trajectory import (CostWeights, FeasibilityError, Limits, OptimizationFailure,
                         OptimizerOptions, ShuffleResult, shuffle_and_optimize)

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "StageError",
    "PodConfig",
    "SelectionConfig",
    "TrajectoryConfig",
    "PipelineConfig",
    "RunResult",
    "SizeSummary",
    "SweepReport",
    "PLOT_KINDS",
    "stage_generate",
    "stage_pod",
    "stage_select",
    "stage_plan",
    "stage_evaluate",
    "run_pipeline",
    "sweep",
    "export_plot_data",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
POD_FLAVORS = ("svd", "covariance-eigen")
PLOT_KINDS = ("field-map", "error-map", "trajectory-overlay", "sweep-bars")


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


class StageError(RuntimeError):
    """A pipeline stage failed; ``cause`` keeps the original exception."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def _take(cls, d, section: str, skip=()):
    """Construct dataclass ``cls`` from ``d``, rejecting unknown keys."""
    if not isinstance(d, dict):
        raise ConfigError(f"section '{section}' must be an object")
    names = {f.name for f in fields(cls)} - set(skip)
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}': {exc}") from exc


@dataclass(frozen=True)
class PodConfig:
    rank: int | None = None
    energy: float | None = None
    flavor: str = "svd"

    def __post_init__(self):
        if self.flavor not in POD_FLAVORS:
            raise ValueError(f"flavor must be one of {POD_FLAVORS}")
        if self.rank is not None and self.energy is not None:
            raise ValueError("give either rank or energy, not both")
        if self.rank is not None and (not isinstance(self.rank, int) or self.rank < 0):
            raise ValueError("rank must be a nonnegative integer")
        if self.energy is not None and not 0 < self.energy <= 1:
            raise ValueError("energy must lie in (0, 1]")


@dataclass(frozen=True)
class SelectionConfig:
    m: int = 5
    c1: int = 20
    kind: str = "delta-impulse"
    gamma: float | None = None
    eps_noise: float = 0.0
    snapshot: int = 0

    def __post_init__(self):
        if self.kind not in MEASUREMENT_KINDS:
            raise ValueError(f"kind must be one of {MEASUREMENT_KINDS}")
        if self.m < 1 or self.c1 < 1:
            raise ValueError("m and c1 must be at least 1")
        if self.eps_noise < 0:
            raise ValueError("eps_noise must be nonnegative")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class TrajectoryConfig:
    g1: tuple[float, float] = (0.1, 0.1)
    g2: tuple[float, float] = (1.9, 0.9)
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    v_max: float = 0.7
    q: int = 10
    c2: int = 7
    t0: float = 0.0
    accumulation: str = "cumulative-window"
    optimizer: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "g1", tuple(float(v) for v in self.g1))
        object.__setattr__(self, "g2", tuple(float(v) for v in self.g2))
        object.__setattr__(self, "weights", tuple(float(v) for v in self.weights))
        if len(self.g1) != 2 or len(self.g2) != 2 or len(self.weights) != 3:
            raise ValueError("g1, g2 need 2 entries and weights 3")
        CostWeights(*self.weights)
        Limits(self.v_max)
        if self.q < 1 or self.c2 < 1:
            raise ValueError("q and c2 must be at least 1")
        if self.accumulation not in ACCUMULATION_POLICIES:
            raise ValueError(f"accumulation must be one of {ACCUMULATION_POLICIES}")
        self.options()

    def options(self) -> OptimizerOptions:
        allowed = {f.name for f in fields(OptimizerOptions)} - {"q", "accumulation"}
        unknown = sorted(set(self.optimizer) - allowed)
        if unknown:
            raise ValueError(f"unknown optimizer option(s): {', '.join(unknown)}")
        return OptimizerOptions(**self.optimizer, q=self.q, accumulation=self.accumulation)

    @property
    def cost_weights(self) -> CostWeights:
        return CostWeights(*self.weights)

    @property
    def limits(self) -> Limits:
        return Limits(self.v_max)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    flow: DoubleGyreParams = field(default_factory=DoubleGyreParams)
    grid: GridSpec = field(default_factory=lambda: GridSpec(50, 25))
    time: TimeGrid = field(default_factory=TimeGrid)
    pod: PodConfig = field(default_factory=PodConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    output_dir: str = "out"

    def __post_init__(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.selection.m >= self.grid.n_loc:
            raise ConfigError(f"waypoint count m={self.selection.m} must be below "
                              f"the {self.grid.n_loc} grid locations")
        if not -self.time.count <= self.selection.snapshot < self.time.count:
            raise ConfigError("selection snapshot index outside the time grid")
        if self.pod.rank is not None and self.pod.rank > min(2 * self.grid.n_loc, self.time.count):
            raise ConfigError("POD rank exceeds the snapshot matrix dimensions")
        for name, g in (("g1", self.trajectory.g1), ("g2", self.trajectory.g2)):
            if not self.grid.contains(np.array(g), tol=0.0):
                raise ConfigError(f"{name} lies outside the domain")

    # -- serialization -------------------------------------------------
    def to_dict(self, with_output: bool = True) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "flow": asdict(self.flow),
            "grid": {"nx": self.grid.nx, "ny": self.grid.ny},
            "time": self.time.to_dict(),
            "pod": asdict(self.pod),
            "selection": asdict(self.selection),
            "trajectory": {**asdict(self.trajectory),
                           "g1": list(self.trajectory.g1), "g2": list(self.trajectory.g2),
                           "weights": list(self.trajectory.weights),
                           "optimizer": dict(sorted(self.trajectory.optimizer.items()))},
        }
        if with_output:
            d["output_dir"] = self.output_dir
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(d)
        version = d.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        kw = {}
        if "seed" in d:
            kw["seed"] = d["seed"]
        if "output_dir" in d:
            kw["output_dir"] = str(d["output_dir"])
        if "flow" in d:
            kw["flow"] = _take(DoubleGyreParams, d["flow"], "flow")
        if "grid" in d:
            kw["grid"] = _take(GridSpec, d["grid"], "grid", skip=("x_range", "y_range"))
        if "time" in d:
            kw["time"] = _take(TimeGrid, d["time"], "time")
        if "pod" in d:
            kw["pod"] = _take(PodConfig, d["pod"], "pod")
        if "selection" in d:
            kw["selection"] = _take(SelectionConfig, d["selection"], "selection")
        if "trajectory" in d:
            kw["trajectory"] = _take(TrajectoryConfig, d["trajectory"], "trajectory")
        try:
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        io.write_json(path, self.to_dict())

    def digest(self) -> str:
        """SHA-256 of the canonical config, output directory excluded."""
        blob = json.dumps(self.to_dict(with_output=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed=None, output_dir=None) -> "PipelineConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if output_dir is not None:
            kw["output_dir"] = str(output_dir)
        return replace(self, **kw) if kw else self


# -- stages -------------------------------------------------------------

def _stage(name):
    def wrap(fn):
        def run(*args, **kwargs):
            t = time.perf_counter()
            try:
                out = fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
            log.info("stage %s done in %.1f s", name, time.perf_counter() - t)
            return out
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_stage("generate")
def stage_generate(cfg: PipelineConfig) -> SnapshotMatrix:
    return build_snapshot_matrix(cfg.grid, cfg.time, cfg.flow)


def _svd(X: SnapshotMatrix):
    U, s, _ = np.linalg.svd(X.data, full_matrices=False)
    return U, s


@_stage("pod")
def stage_pod(cfg: PipelineConfig, X: SnapshotMatrix, svd=None) -> PodBasis:
    if cfg.pod.flavor == "svd":
        return pod_svd(X, cfg.pod.rank, cfg.pod.energy, svd=svd)
    return pod_covariance(X, cfg.pod.rank, cfg.pod.energy)


@_stage("select")
def stage_select(cfg: PipelineConfig, X: SnapshotMatrix, basis: PodBasis, svd=None) -> WaypointSet:
    sel = cfg.selection
    return select_waypoints(X, basis, sel.m, sel.c1, cfg.seed, kind=sel.kind,
                            snapshot=sel.snapshot, transform=transform_basis(X, svd=svd),
                            eps_noise=sel.eps_noise, gamma=sel.gamma)


@_stage("plan")
def stage_plan(cfg: PipelineConfig, waypoints: WaypointSet, basis: PodBasis,
               workers: int = 1) -> ShuffleResult:
    tc = cfg.trajectory
    return shuffle_and_optimize(np.array(waypoints.positions), tc.c2, tc.g1, tc.g2,
                                tc.cost_weights, tc.limits, derive_seed(cfg.seed, "plan"),
                                tc.options(), basis=basis, truth=cfg.flow, t0=tc.t0,
                                workers=workers)


@dataclass
class _Path:
    positions: np.ndarray
    times: np.ndarray


@_stage("evaluate")
def stage_evaluate(cfg: PipelineConfig, traj, basis: PodBasis) -> dict:
    """Reconstruction along ``traj`` (anything with ``positions`` and ``times``).

    Returns a summary plus the final-step reference and reconstructed fields.
    """
    tc = cfg.trajectory
    pos = np.asarray(traj.positions, dtype=float)
    inside = basis.grid.contains(pos, tol=1e-9)
    if not inside:
        # unconverged plans may overshoot the box slightly; sample at the wall
        log.warning("trajectory leaves the domain; clipping for evaluation")
    err = trajectory_reconstruction_error(traj, basis, cfg.flow, tc.accumulation,
                                          check_domain=False)
    t_end = float(np.asarray(traj.times)[-1])
    reference = grid_velocity(basis.grid, t_end, cfg.flow)
    estimate = reconstruct(err.coefficients[-1], basis) if basis.r else basis.mean_field.copy()
    ref_rms = float(np.sqrt(np.mean(reference**2)))
    diff_rms = float(np.sqrt(np.mean((estimate - reference) ** 2)))
    summary = {
        "accumulation": tc.accumulation,
        "E": err.E,
        "per_step": err.per_step.tolist(),
        "rms": err.rms.tolist(),
        "underdetermined_steps": int(np.sum(err.underdetermined)),
        "final_time": t_end,
        "final_reference_rms": ref_rms,
        "final_difference_rms": diff_rms,
        "final_relative_rms": diff_rms / ref_rms if ref_rms > 0 else float("nan"),
        "r": basis.r,
        "inside_domain": bool(inside),
    }
    return {"summary": summary, "reference": reference, "estimate": estimate}


# -- artifact writing -----------------------------------------------------

@dataclass
class RunResult:
    out_dir: Path
    files: list[Path]
    waypoints: WaypointSet
    plan: ShuffleResult
    evaluation: dict
    basis: PodBasis


def _write_plan(out: Path, plan: ShuffleResult) -> list[Path]:
    best = plan.best
    paths = [out / "trajectory.csv", out / "trajectory.json", out / "shuffles.json"]
    best.to_csv(paths[0])
    summary = best.summary()
    summary["trial_index"] = plan.best_index
    io.write_json(paths[1], summary)
    io.write_json(paths[2], {
        "best_index": plan.best_index,
        "orders": plan.orders,
        "errors": plan.errors,
        "trials": [None if t is None else t.summary() for t in plan.trials],
    })
    return paths


def _write_evaluation(out: Path, ev: dict, grid: GridSpec) -> list[Path]:
    paths = [out / "evaluation.json", out / "fields.bin"]
    io.write_json(paths[0], {**ev["summary"], "grid": grid.to_dict()})
    io.write_matrix(paths[1], np.vstack([ev["reference"], ev["estimate"]]))
    return paths


def _write_manifest(out: Path, cfg: PipelineConfig, files: list[Path], seeds: dict) -> Path:
    from . import __version__

    entries = sorted({p.resolve() for p in files})
    manifest = {
        "package_version": __version__,
        "config": cfg.to_dict(with_output=False),
        "config_sha256": cfg.digest(),
        "seeds": seeds,
        "files": [{"path": p.name, "sha256": io.file_sha256(p), "bytes": p.stat().st_size}
                  for p in entries],
    }
    path = out / "manifest.json"
    io.write_json(path, manifest)
    return path


def _seed_record(cfg: PipelineConfig) -> dict:
    return {
        "master": cfg.seed,
        "select_trials": [derive_seed(cfg.seed, "select", i) for i in range(cfg.selection.c1)],
        "plan": derive_seed(cfg.seed, "plan"),
        "shuffles": [derive_seed(derive_seed(cfg.seed, "plan"), "shuffle", i)
                     for i in range(1, cfg.trajectory.c2)],
    }


def run_pipeline(cfg: PipelineConfig, out_dir=None, workers: int = 1) -> RunResult:
    """Every stage in order; artifacts and the manifest go to ``out_dir``."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    try:
        X = stage_generate(cfg)
        files += io.write_snapshots(out / "snapshots", X)
        svd = _svd(X)
        basis = stage_pod(cfg, X, svd)
        files += io.write_basis(out / "pod", basis)
        wps = stage_select(cfg, X, basis, svd)
        wps.to_json(out / "waypoints.json")
        files.append(out / "waypoints.json")
        del X, svd
        plan = stage_plan(cfg, wps, basis, workers)
        files += _write_plan(out, plan)
        ev = stage_evaluate(cfg, plan.best.trajectory, basis)
        files += _write_evaluation(out, ev, basis.grid)
        for kind in ("field-map", "error-map", "trajectory-overlay"):
            files += export_plot_data(out, kind)
    finally:
        if files:
            _write_manifest(out, cfg, files, _seed_record(cfg))
    return RunResult(out, files, wps, plan, ev["summary"], basis)


# -- sweep ----------------------------------------------------------------

_METRICS = ("E", "F", "D")


@dataclass
class SizeSummary:
    size: int
    n: int
    n_failed: int
    mean: dict
    std: dict
    single_sample: bool


@dataclass
class SweepReport:
    sizes: list[SizeSummary]
    records: list[dict]

    def summary(self, size: int) -> SizeSummary:
        for s in self.sizes:
            if s.size == size:
                return s
        raise KeyError(size)

    def to_dict(self) -> dict:
        return {"sizes": [asdict(s) for s in self.sizes], "records": self.records}

    def to_json(self, path) -> None:
        io.write_json(path, self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        return cls([SizeSummary(**s) for s in d["sizes"]], d["records"])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["size", "n", "n_failed", "single_sample"]
                       + [f"{s}_{k}" for k in _METRICS for s in ("mean", "std")])
            for s in self.sizes:
                w.writerow([s.size, s.n, s.n_failed, int(s.single_sample)]
                           + [repr(float(v)) for k in _METRICS for v in (s.mean[k], s.std[k])])

    def records_csv(self, path) -> None:
        cols = ["size", "set", "shuffle", "ok", "converged", "D", "E", "F", "J", "error"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.records:
                w.writerow(["" if r.get(c) is None else r.get(c) for c in cols])


class SweepError(RuntimeError):
    def __init__(self, message, report: SweepReport):
        super().__init__(message)
        self.report = report


def _aggregate(size: int, records: list[dict], expected: int) -> SizeSummary:
    ok = [r for r in records if r["ok"]]
    mean, std = {}, {}
    for k in _METRICS:
        vals = np.array([r[k] for r in ok], dtype=float)
        mean[k] = float(vals.mean()) if vals.size else float("nan")
        std[k] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return SizeSummary(size, len(ok), expected - len(ok), mean, std, len(ok) == 1)


def sweep(cfg: PipelineConfig, sizes, sets_per_size: int, shuffles_per_set: int,
          out_dir=None, workers: int = 1, X: SnapshotMatrix | None = None,
          basis: PodBasis | None = None) -> SweepReport:
    """Selection and planning repeated over waypoint counts.

    Each size runs ``sets_per_size`` independently seeded selections, each
    planned with ``shuffles_per_set`` orders; every (set, shuffle) pair is a
    record. Failed trials are recorded and skipped in the statistics. A size
    without a single successful trial raises :class:`SweepError` after the
    report is written.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ConfigError("sweep needs at least one waypoint count")
    if sets_per_size < 1 or shuffles_per_set < 1:
        raise ConfigError("sets and shuffles per size must be at least 1")
    for s in sizes:
        if not 1 <= s < cfg.grid.n_loc:
            raise ConfigError(f"waypoint count {s} outside 1..{cfg.grid.n_loc - 1}")
    if X is None:
        X = stage_generate(cfg)
    svd = _svd(X)
    if basis is None:
        basis = stage_pod(cfg, X, svd)
    Psi = transform_basis(X, svd=svd)
    tc = cfg.trajectory
    records: list[dict] = []
    summaries: list[SizeSummary] = []
    for size in sizes:
        size_records = []
        for j in range(sets_per_size):
            set_seed = derive_seed(cfg.seed, f"sweep-{size}", j)
            base = {"size": size, "set": j}
            try:
                wps = select_waypoints(X, basis, size, cfg.selection.c1, set_seed,
                                       kind=cfg.selection.kind, snapshot=cfg.selection.snapshot,
                                       transform=Psi, eps_noise=cfg.selection.eps_noise,
                                       gamma=cfg.selection.gamma)
                res = shuffle_and_optimize(np.array(wps.positions), shuffles_per_set, tc.g1, tc.g2,
                                           tc.cost_weights, tc.limits, set_seed, tc.options(),
                                           basis=basis, truth=cfg.flow, t0=tc.t0, workers=workers)
            except (SelectionError, OptimizationFailure, FeasibilityError) as exc:
                log.warning("size %d set %d failed: %s", size, j, exc)
                size_records += [{**base, "shuffle": k, "ok": False, "converged": False,
                                  "D": None, "E": None, "F": None, "J": None,
                                  "error": f"{type(exc).__name__}: {exc}"}
                                 for k in range(shuffles_per_set)]
                continue
            for k, trial in enumerate(res.trials):
                if trial is None:
                    size_records.append({**base, "shuffle": k, "ok": False, "converged": False,
                                         "D": None, "E": None, "F": None, "J": None,
                                         "error": res.errors[k]})
                else:
                    c = trial.cost
                    size_records.append({**base, "shuffle": k, "ok": True,
                                         "converged": trial.converged, "D": c.D, "E": c.E,
                                         "F": c.F, "J": c.J, "error": None})
        records += size_records
        summaries.append(_aggregate(size, size_records, sets_per_size * shuffles_per_set))
    report = SweepReport(summaries, records)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_json(out / "sweep.json")
        report.to_csv(out / "sweep.csv")
        report.records_csv(out / "sweep_records.csv")
    empty = [s.size for s in summaries if s.n == 0]
    if empty:
        raise SweepError(f"no successful trial for size(s) {empty}", report)
    return report


# -- plot data ------------------------------------------------------------

def _write_map(path: Path, grid: GridSpec, values: np.ndarray) -> Path:
    """``ny`` rows by ``nx`` columns (row-major, y up the rows) with axis headers."""
    M = np.asarray(values, dtype=float).reshape(grid.ny, grid.nx)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y\\x"] + [repr(float(x)) for x in grid.x])
        for j in range(grid.ny):
            w.writerow([repr(float(grid.y[j]))] + [repr(float(v)) for v in M[j]])
    return path


def read_map(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of the map writer: ``(x, y, values)`` with values ``(ny, nx)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    x = np.array([float(v) for v in rows[0][1:]])
    y = np.array([float(r[0]) for r in rows[1:]])
    return x, y, np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def _load_fields(src: Path):
    meta = json.loads((src / "evaluation.json").read_text(encoding="utf-8"))
    grid = GridSpec.from_dict(meta["grid"])
    ref, est = io.read_matrix(src / "fields.bin")
    return grid, ref, est


def export_plot_data(artifact_dir, kind: str, out_dir=None) -> list[Path]:
    """Plot-ready CSV files from the artifacts in ``artifact_dir``.

    * ``field-map``: reference and reconstructed u and v at the final step.
    * ``error-map``: reconstruction minus reference, per component.
    * ``trajectory-overlay``: ``(t, x, y)`` samples plus a marker file with
      the start, the waypoints in visiting order and the goal.
    * ``sweep-bars``: mean and standard deviation of E, F, D per size.
    """
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    src = Path(artifact_dir)
    out = Path(out_dir) if out_dir is not None else src
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if kind in ("field-map", "error-map"):
        grid, ref, est = _load_fields(src)
        n = grid.n_loc
        for comp, sl in (("u", slice(0, n)), ("v", slice(n, 2 * n))):
            if kind == "field-map":
                written.append(_write_map(out / f"field_map_reference_{comp}.csv", grid, ref[sl]))
                written.append(_write_map(out / f"field_map_reconstruction_{comp}.csv", grid, est[sl]))
            else:
                written.append(_write_map(out / f"error_map_{comp}.csv", grid, est[sl] - ref[sl]))
    elif kind == "trajectory-overlay":
        with open(src / "trajectory.csv", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        summary = json.loads((src / "trajectory.json").read_text(encoding="utf-8"))
        path = out / "trajectory_overlay.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y"])
            for r in rows:
                w.writerow([r["t"], r["x"], r["y"]])
        written.append(path)
        knots = summary["knots"]
        path = out / "trajectory_markers.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["marker", "order", "x", "y"])
            for i, (x, y) in enumerate(knots):
                label = "start" if i == 0 else "goal" if i == len(knots) - 1 else "waypoint"
                w.writerow([label, i, repr(float(x)), repr(float(y))])
        written.append(path)
    else:
        report = SweepReport.from_dict(json.loads((src / "sweep.json").read_text(encoding="utf-8")))
        path = out / "sweep_bars.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["size", "metric", "mean", "std", "n"])
            for s in report.sizes:
                for k in _METRICS:
                    w.writerow([s.size, k, repr(float(s.mean[k])), repr(float(s.std[k])), s.n])
        written.append(path)
    return written


def read_trajectory_csv(path) -> _Path:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    pos = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    t = np.array([float(r["t"]) for r in rows])
    return _Path(pos, t)
