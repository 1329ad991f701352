import os
import subprocess
import sys

import numpy as np
import pytest

from stefan2d import cli
from stefan2d.config import ConfigError, load_config


def _write_cfg(tmp_path, name, extra=""):
    p = tmp_path / f"{name}.cfg"
    p.write_text(f"[case]\nname = {name}\nout_dir = {tmp_path}/out\n{extra}")
    return str(p)


def test_load_config_presets(tmp_path):
    cfg = load_config(_write_cfg(tmp_path, "melting_circle"))
    assert cfg.name == "melting_circle"
    assert cfg.grid.nx == 64
    cfg = load_config(_write_cfg(tmp_path, "frank",
                                 "[grid]\nn = 32\n[time]\nt_final = 1.5\n"))
    assert cfg.grid.nx == 32
    assert cfg.t_final == 1.5


def test_load_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[case]\nname = frank\n[grid]\nnn = 4\n")
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_load_config_rejects_unknown_case(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[case]\nname = warp_drive\n")
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_table_round_trip(tmp_path):
    path = str(tmp_path / "t.csv")
    rows = [(1, 0.125, "a"), (2, 3.5e-7, "b")]
    cli.write_table(path, ["k", "v", "tag"], rows, units=("1", "m", "1"))
    header, body = cli.read_table(path)
    assert header == ["k", "v", "tag"]
    assert body[0][1] == 0.125
    assert body[1][1] == 3.5e-7


def test_forward_command_exports_artifacts(tmp_path):
    cfgp = _write_cfg(tmp_path, "frank",
                      "[grid]\nn = 32\n[time]\nt_final = 1.1\n")
    rc = cli.main(["forward", cfgp, "--out", str(tmp_path / "o"), "--quiet"])
    assert rc == cli.OK
    out = tmp_path / "o"
    for f in ("summary.csv", "phi_final.dat", "front_final.csv",
              "front_final.svg", "interface_length.svg"):
        assert (out / f).exists(), f
    # snapshot header carries grid metadata
    head = (out / "phi_final.dat").read_text().splitlines()[0]
    assert "nx 32" in head and "variable phi" in head


def test_forward_command_deterministic(tmp_path):
    cfgp = _write_cfg(tmp_path, "frank",
                      "[grid]\nn = 32\n[time]\nt_final = 1.05\n")
    cli.main(["forward", cfgp, "--out", str(tmp_path / "a"), "--quiet"])
    cli.main(["forward", cfgp, "--out", str(tmp_path / "b"), "--quiet"])
    a = (tmp_path / "a" / "summary.csv").read_bytes()
    b = (tmp_path / "b" / "summary.csv").read_bytes()
    assert a == b


def test_usage_error_exit_code(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[case]\nname = nope\n")
    rc = cli.main(["forward", str(p), "--quiet"])
    assert rc == cli.USAGE


def test_gradcheck_command_smoke(tmp_path):
    # tiny horizon keeps this in unit-test time; direction must align
    cfgp = _write_cfg(tmp_path, "melting_circle",
                      "[grid]\nn = 16\n[time]\nt_final = 0.02\n")
    rc = cli.main(["gradcheck", cfgp, "--out", str(tmp_path / "g"),
                   "--quiet", "--tol", "1.0"])
    assert rc == cli.OK
    assert (tmp_path / "g" / "gradcheck.csv").exists()


def test_console_entry_point_runs():
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(
        [os.path.join(os.path.dirname(__file__), "..", "src"),
         env.get("PYTHONPATH", "")])
    out = subprocess.run(
        [sys.executable, "-m", "stefan2d.cli", "--help"],
        capture_output=True, text=True, env=env)
    assert out.returncode == 0
    assert "validate" in out.stdout
