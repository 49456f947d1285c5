import json
import shutil
import subprocess

import numpy as np
import pytest

from podctl import cli, optctl, rom
from podctl.errors import ConvergenceError

SMALL = {
    "resolution": [9, 9], "n": 21,
    "rom": {"ells": [2, 4]},
    "control": {"ell_max": 10, "eps_apo": 1e-3, "n_random": 5},
    "mpc": {"resolution": [7, 7], "T": 0.5, "n": 11, "horizon": 5, "ell": 4},
    "pareto": {"resolution": [9, 5], "n": 21, "h_par": 8.0},
}


def _config(tmp_path, data=SMALL, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_config_round_trip():
    cfg = cli.RunConfig.from_dict(SMALL)
    again = cli.RunConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert cfg.mpc.horizon == 5 and cfg.pod.strategy == "svd"


@pytest.mark.parametrize("data", [{"bogus": 1}, {"pod": {"bogus": 1}}, {"n": 1},
                                  {"preset": "other"}, {"pod": 3}])
def test_bad_config_exit_code(tmp_path, data):
    assert cli.main(["simulate", "--config", _config(tmp_path, data),
                     "--out", str(tmp_path / "o")]) == 2


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["pod", "--config", str(bad)]) == 2
    assert cli.main(["pod", "--config", str(tmp_path / "missing.json")]) == 2


@pytest.mark.parametrize("command", cli.COMMANDS)
def test_commands_run(tmp_path, command):
    out = tmp_path / command
    assert cli.main([command, "--config", _config(tmp_path), "--out", str(out)]) == 0
    meta = json.loads((out / "run.json").read_text())
    assert meta["command"] == command
    assert any(p.suffix == ".csv" for p in out.iterdir())


@pytest.mark.parametrize("command", ["simulate", "rom", "control"])
def test_outputs_are_deterministic(tmp_path, command):
    cfg = _config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main([command, "--config", cfg, "--out", str(a), "--seed", "3"]) == 0
    assert cli.main([command, "--config", cfg, "--out", str(b), "--seed", "3"]) == 0
    for f in sorted(a.glob("*.csv")):
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_float_format(tmp_path):
    out = tmp_path / "o"
    cli.main(["rom", "--config", _config(tmp_path), "--out", str(out)])
    rows = (out / "rom_errors.csv").read_text().splitlines()
    assert rows[0].startswith("ell,rank,max_error,max_bound,efficiency")
    value = rows[1].split(",")[2]
    assert float(value) == float("%.17g" % float(value))
    assert len(value.replace("-", "").split("e")[0].replace(".", "")) >= 15


def test_rigor_failure_exit_code(tmp_path, monkeypatch):
    real = rom.aposteriori_state

    def shrunk(*args, **kwargs):
        rep = real(*args, **kwargs)
        rep.bound = rep.bound * 1e-3
        return rep

    monkeypatch.setattr(rom, "aposteriori_state", shrunk)
    assert cli.main(["rom", "--config", _config(tmp_path), "--out", str(tmp_path / "o")]) == 3


def test_convergence_failure_exit_code(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise ConvergenceError("no convergence")

    monkeypatch.setattr(optctl, "pdass_solve", fail)
    assert cli.main(["control", "--config", _config(tmp_path), "--out", str(tmp_path / "o")]) == 4


def test_seed_changes_only_random_check(tmp_path):
    cfg = _config(tmp_path)
    cli.main(["control", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    cli.main(["control", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "control.csv").read_bytes() == (tmp_path / "b" / "control.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "run.json").read_text())["config"]["seed"] == 2


@pytest.mark.skipif(shutil.which("podctl") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["podctl", "simulate", "--config", _config(tmp_path), "--out",
                          str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run(["podctl", "simulate", "--config", _config(tmp_path, {"x": 1}, "b.json")],
                         capture_output=True, text=True)
    assert res.returncode == 2 and "unknown key" in res.stderr
