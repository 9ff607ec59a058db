"""Command line entry point: ``dcsflow <subcommand> [--config cfg.json] ...``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .flow import DomainError
from .pipeline import (PLOT_KINDS, ConfigError, PipelineConfig, StageError, SweepError,
                       _write_evaluation, _write_plan, export_plot_data, read_trajectory_csv,
                       run_pipeline, stage_evaluate, stage_generate, stage_plan, stage_pod,
                       stage_select, sweep)
from .sparse import SelectionError, WaypointSet
from .trajectory import FeasibilityError, OptimizationFailure

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

log = logging.getLogger("dcsflow")

_INVALID = (ConfigError, FeasibilityError, DomainError, io.FormatError, FileNotFoundError,
            json.JSONDecodeError)
_NUMERIC = (SelectionError, OptimizationFailure, SweepError, np.linalg.LinAlgError,
            FloatingPointError)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, _INVALID):
        return EXIT_INVALID
    if isinstance(exc, _NUMERIC):
        return EXIT_NUMERIC
    if isinstance(exc, ValueError):
        return EXIT_INVALID
    return EXIT_NUMERIC


def _parse_sizes(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty size list")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", type=Path, help="artifact directory (overrides output_dir)")
    common.add_argument("--threads", type=int, default=1,
                        help="worker processes for independent trials (default 1)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="dcsflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write the snapshot matrix")
    sub.add_parser("pod", parents=[common], help="POD basis from written snapshots")
    sub.add_parser("select", parents=[common], help="choose waypoints")
    sub.add_parser("plan", parents=[common], help="optimize the trajectory through the waypoints")
    sub.add_parser("evaluate", parents=[common], help="reconstruct along the planned trajectory")
    sub.add_parser("run", parents=[common], help="all stages plus manifest")
    sp = sub.add_parser("sweep", parents=[common], help="repeat selection and planning over sizes")
    sp.add_argument("--sizes", type=_parse_sizes, default=_parse_sizes("1-10"),
                    help="waypoint counts, e.g. '1-10' or '1,3,5'")
    sp.add_argument("--sets", type=int, default=10, help="waypoint sets per size")
    sp.add_argument("--shuffles", type=int, default=7, help="orders per set")
    ep = sub.add_parser("export", parents=[common], help="plot-ready CSV from artifacts")
    ep.add_argument("--kind", required=True, choices=PLOT_KINDS)
    ep.add_argument("--artifacts", type=Path, help="artifact directory (default: --out)")
    return p


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    return cfg.with_overrides(seed=args.seed, output_dir=args.out)


def _dispatch(args) -> None:
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    cfg = _config(args)
    out = Path(cfg.output_dir)
    cmd = args.command
    if cmd == "run":
        res = run_pipeline(cfg, out, workers=args.threads)
        ev = res.evaluation
        print(f"E={res.plan.best.cost.E:.6g} F={res.plan.best.cost.F:.6g} "
              f"D={res.plan.best.cost.D:.6g} final relative RMS={ev['final_relative_rms']:.4g}")
        return
    if cmd == "sweep":
        report = sweep(cfg, args.sizes, args.sets, args.shuffles, out, workers=args.threads)
        for s in report.sizes:
            print(f"size {s.size}: n={s.n} mean E={s.mean['E']:.6g} F={s.mean['F']:.6g} "
                  f"D={s.mean['D']:.6g}")
        return
    if cmd == "export":
        for path in export_plot_data(args.artifacts or out, args.kind, out):
            print(path)
        return

    out.mkdir(parents=True, exist_ok=True)
    if cmd == "generate":
        X = stage_generate(cfg)
        io.write_snapshots(out / "snapshots", X)
    elif cmd == "pod":
        X = io.read_snapshots(out / "snapshots")
        io.write_basis(out / "pod", stage_pod(cfg, X))
    elif cmd == "select":
        X = io.read_snapshots(out / "snapshots")
        basis = io.read_basis(out / "pod")
        stage_select(cfg, X, basis).to_json(out / "waypoints.json")
    elif cmd == "plan":
        wps = WaypointSet.from_json(out / "waypoints.json")
        basis = io.read_basis(out / "pod")
        _write_plan(out, stage_plan(cfg, wps, basis, args.threads))
    elif cmd == "evaluate":
        basis = io.read_basis(out / "pod")
        traj = read_trajectory_csv(out / "trajectory.csv")
        _write_evaluation(out, stage_evaluate(cfg, traj, basis), basis.grid)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        code = _exit_code(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
