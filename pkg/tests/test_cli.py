import json
import subprocess
import sys

import numpy as np
import pytest

from dcsflow import cli, io
from dcsflow.pipeline import StageError
from dcsflow.sparse import SelectionError

CFG = {
    "schema_version": 1,
    "seed": 3,
    "grid": {"nx": 11, "ny": 6},
    "time": {"count": 101},
    "selection": {"m": 3, "c1": 4},
    "trajectory": {"c2": 2, "optimizer": {"max_steps": 30}},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CFG))
    return p


def _json_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix in (".json", ".csv", ".bin")}


def test_run_twice_byte_identical(cfg_path, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(a)]) == 0
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(b)]) == 0
    assert "final relative RMS" in capsys.readouterr().out
    assert _json_bytes(a) == _json_bytes(b)


def test_seed_flag_changes_selection(cfg_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, seed in ((a, "3"), (b, "4")):
        assert cli.main(["run", "--config", str(cfg_path), "--out", str(out), "--seed", seed]) == 0
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["seeds"]["master"] == 3 and mb["seeds"]["master"] == 4


def test_stage_subcommands_chain(cfg_path, tmp_path):
    out = tmp_path / "stages"
    for cmd in ("generate", "pod", "select", "plan", "evaluate"):
        assert cli.main([cmd, "--config", str(cfg_path), "--out", str(out)]) == 0, cmd
    full = tmp_path / "full"
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(full)]) == 0
    for name in ("waypoints.json", "trajectory.csv", "evaluation.json"):
        assert (out / name).read_bytes() == (full / name).read_bytes(), name
    assert cli.main(["export", "--kind", "field-map", "--out", str(out)]) == 0
    assert (out / "field_map_reference_u.csv").exists()


def test_sweep_and_export(cfg_path, tmp_path, capsys):
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", str(cfg_path), "--out", str(out),
                     "--sizes", "1,2", "--sets", "1", "--shuffles", "1"]) == 0
    assert "size 2" in capsys.readouterr().out
    assert cli.main(["export", "--kind", "sweep-bars", "--out", str(out)]) == 0
    assert (out / "sweep_bars.csv").exists()


def test_validation_exit_code(tmp_path, cfg_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**CFG, "selection": {"m": 66}}))
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    bad.write_text(json.dumps({**CFG, "colour": "red"}))
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["pod", "--config", str(cfg_path), "--out", str(tmp_path / "empty")]) == 2
    assert cli.main(["run", "--config", str(cfg_path), "--threads", "0"]) == 2
    with pytest.raises(SystemExit):
        cli.main(["export", "--kind", "histogram"])


def test_numeric_exit_code(cfg_path, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise StageError("select", SelectionError("no trial converged"))
    monkeypatch.setattr(cli, "stage_select", boom)
    out = tmp_path / "n"
    assert cli.main(["generate", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert cli.main(["pod", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert cli.main(["select", "--config", str(cfg_path), "--out", str(out)]) == 3


@pytest.mark.parametrize("exc,code", [
    (np.linalg.LinAlgError("x"), 3), (FloatingPointError(), 3), (RuntimeError(), 3),
    (ValueError(), 2), (io.FormatError(), 2), (StageError("plan", ValueError()), 2),
])
def test_exit_code_mapping(exc, code):
    assert cli._exit_code(exc) == code


def test_size_parser():
    assert cli._parse_sizes("1-3,7") == [1, 2, 3, 7]


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "dcsflow", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "sweep" in out.stdout
