import json
import subprocess
import sys

import pytest

from vortexsheet.cli import main

STABLE = {"sheet": {"u_r": 3.0, "w_r": 2.0, "u_l": 3.0, "w_l": -2.0, "c_bar": 1.0}}
UNSTABLE = {"sheet": {"u_r": 3.0, "w_r": 0.5, "u_l": 3.0, "w_l": -0.5, "c_bar": 1.0}}
SMALL = {"grid": {"X": 0.5, "Nx": 16, "Ymax": 1.0, "Ny": 9, "Z": 1.0, "Nz": 8}}


def _cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_check_stability_exit_codes(tmp_path):
    out = tmp_path / "a"
    assert main(["check-stability", "--config", _cfg(tmp_path, STABLE), "--out", str(out)]) == 0
    v = json.loads((out / "verdict.json").read_text())
    assert v["verdict"]["verdict"] == "WeaklyStable"
    assert (out / "theta_scan.csv").exists() and (out / "manifest.json").exists()
    out2 = tmp_path / "b"
    assert main(["check-stability", "--config", _cfg(tmp_path, UNSTABLE, "u.json"),
                 "--out", str(out2)]) == 2


def test_usage_errors(tmp_path):
    out = str(tmp_path / "o")
    assert main(["check-stability", "--out", out]) == 64
    assert main(["check-stability", "--config", str(tmp_path / "missing.json"), "--out", out]) == 64
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["eikonal", "--config", str(bad), "--out", out]) == 64
    assert main(["eikonal", "--config", _cfg(tmp_path, {"grid": {"Nx": 4}}), "--out", out]) == 64
    assert main(["iterate", "--config", _cfg(tmp_path, {"iteration": {"delta": 0.5}}, "d.json"),
                 "--out", out]) == 64
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 64


def test_manifest_contents(tmp_path):
    out = tmp_path / "m"
    main(["check-stability", "--config", _cfg(tmp_path, STABLE), "--out", str(out), "--seed", "5"])
    m = json.loads((out / "manifest.json").read_text())
    for key in ("config", "config_hash", "seed", "threads", "version", "python", "wall_time",
                "exit_code", "versions"):
        assert key in m
    assert m["seed"] == 5 and m["config"] == STABLE


def test_iterate_deterministic(tmp_path):
    cfg = _cfg(tmp_path, {**STABLE, **SMALL, "iteration": {"N": 4}})
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for o in outs:
        assert main(["iterate", "--config", cfg, "--out", str(o)]) == 0
    for name in ("ledger.json", "summary.json", "summary.csv", "decay_fit.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_iterate_zero_delta(tmp_path):
    out = tmp_path / "z"
    cfg = _cfg(tmp_path, {**STABLE, **SMALL, "iteration": {"delta": 0.0, "N": 2}})
    assert main(["iterate", "--config", cfg, "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["status"] == "converged_at_step_0"


def test_iterate_unstable_background(tmp_path):
    out = tmp_path / "u"
    assert main(["iterate", "--config", _cfg(tmp_path, UNSTABLE), "--out", str(out)]) == 2


def test_eikonal_and_report(tmp_path):
    out = tmp_path / "e"
    cfg = _cfg(tmp_path, {"grid": {"X": 0.5, "Nx": 16, "Ymax": 1.0, "Ny": 9, "Z": 1.0, "Nz": 16}})
    assert main(["eikonal", "--config", cfg, "--out", str(out)]) == 0
    e = json.loads((out / "eikonal.json").read_text())
    assert e["trace_mismatch"] == 0
    assert main(["report", "--out", str(out)]) == 0
    assert "eikonal" in (out / "report.md").read_text()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "vortexsheet.cli", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
