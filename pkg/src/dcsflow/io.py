"""File formats: raw binary matrices, snapshot CSV, and POD basis bundles.

Binary matrices carry a 16-byte header of four little-endian uint32 values
(magic, rows, cols, bytes per element) followed by row-major little-endian
float64 data.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .flow import DoubleGyreParams, GridSpec, SnapshotMatrix, TimeGrid
from .pod import PodBasis

__all__ = [
    "MAGIC",
    "FormatError",
    "write_matrix",
    "read_matrix",
    "write_snapshot_csv",
    "read_snapshot_csv",
    "write_snapshots",
    "read_snapshots",
    "write_basis",
    "read_basis",
    "write_json",
    "file_sha256",
]

MAGIC = 0x4D464344  # b"DCFM" read as a little-endian uint32
_HEADER = np.dtype("<u4")
_DATA = np.dtype("<f8")


class FormatError(ValueError):
    """A file does not match the expected layout."""


def write_matrix(path, M: np.ndarray) -> None:
    M = np.ascontiguousarray(np.atleast_2d(M), dtype=_DATA)
    header = np.array([MAGIC, M.shape[0], M.shape[1], _DATA.itemsize], dtype=_HEADER)
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(M.tobytes())


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols, width = np.frombuffer(raw[:16], dtype=_HEADER)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic:#x}")
    if width != _DATA.itemsize:
        raise FormatError(f"{path}: unsupported element width {width}")
    if len(raw) != 16 + int(rows) * int(cols) * int(width):
        raise FormatError(f"{path}: payload size does not match {rows}x{cols}")
    return np.frombuffer(raw[16:], dtype=_DATA).reshape(int(rows), int(cols)).copy()


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_snapshot_csv(path, X: SnapshotMatrix, centered: bool = True) -> None:
    """One row per (location, component); columns are the snapshots."""
    data = X.data if centered else X.full()
    n = X.grid.n_loc
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["loc", "component"] + [f"t{k}" for k in range(X.times.count)])
        for comp, off in (("u", 0), ("v", n)):
            for loc in range(n):
                w.writerow([loc, comp] + [repr(float(v)) for v in data[off + loc]])


def read_snapshot_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Rows back as ``(data, loc_component)`` with data ``(2 n_loc, T)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["loc", "component"]:
        raise FormatError(f"{path}: missing snapshot header")
    keys = np.array([(int(r[0]), r[1]) for r in rows[1:]], dtype=object)
    data = np.array([[float(v) for v in r[2:]] for r in rows[1:]])
    return data, keys


def write_snapshots(stem, X: SnapshotMatrix) -> list[Path]:
    """Centered data and mean as binary matrices plus a JSON description."""
    stem = Path(stem)
    paths = [stem.with_suffix(".bin"), stem.with_name(stem.name + "_mean.bin"),
             stem.with_suffix(".json")]
    write_matrix(paths[0], X.data)
    write_matrix(paths[1], X.mean_field[None, :])
    meta = {"grid": X.grid.to_dict(), "times": X.times.to_dict(),
            "params": None if X.params is None else
            {"A": X.params.A, "epsilon": X.params.epsilon, "omega": X.params.omega}}
    write_json(paths[2], meta)
    return paths


def read_snapshots(stem) -> SnapshotMatrix:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    data = read_matrix(stem.with_suffix(".bin"))
    mean = read_matrix(stem.with_name(stem.name + "_mean.bin"))[0]
    params = None if meta["params"] is None else DoubleGyreParams(**meta["params"])
    return SnapshotMatrix(data, mean, GridSpec.from_dict(meta["grid"]),
                          TimeGrid(**meta["times"]), params)


def write_basis(stem, basis: PodBasis) -> list[Path]:
    """Modes (rows = state entries) and mean as binary matrices, rest in JSON."""
    stem = Path(stem)
    paths = [stem.with_suffix(".bin"), stem.with_name(stem.name + "_mean.bin"),
             stem.with_suffix(".json")]
    write_matrix(paths[0], basis.modes)
    write_matrix(paths[1], basis.mean_field[None, :])
    write_json(paths[2], {
        "r": basis.r,
        "flavor": basis.flavor,
        "energies": [float(e) for e in basis.energies],
        "n_snapshots": basis.n_snapshots,
        "degenerate": basis.degenerate,
        "grid": basis.grid.to_dict(),
    })
    return paths


def read_basis(stem) -> PodBasis:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    modes = read_matrix(stem.with_suffix(".bin"))
    mean = read_matrix(stem.with_name(stem.name + "_mean.bin"))[0]
    return PodBasis(modes, np.array(meta["energies"], dtype=float), mean,
                    GridSpec.from_dict(meta["grid"]), meta["flavor"],
                    int(meta["n_snapshots"]), bool(meta["degenerate"]))
