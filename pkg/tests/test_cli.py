import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from rsgrowth.cli import EXIT_CERTIFICATE, EXIT_CHECK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_OK, main
from rsgrowth.config import ConfigError, config_hash, load, load_schema, resolve

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_config(tmp_path, body, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(body, indent=2))
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


CONTROL_FREE = {"version": 1, "model": {"builtin": "control_free"}, "solver": {"gamma": -1.0}}


def test_solve_control_free(tmp_path):
    cfg = write_config(tmp_path, CONTROL_FREE)
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    sol = read_json(out / "solution.json")
    assert sol["lambda"] == pytest.approx(-0.5, abs=1e-6)
    assert sol["converged"] and sol["version"] == 1
    rows = read_csv(out / "value.csv")
    assert len(rows) == 21
    resolved = read_json(out / "resolved_config.json")
    assert {r["config_hash"] for r in rows} == {config_hash(resolved)}
    assert {r["seed"] for r in rows} == {"0"}
    for name in ("trace.csv", "solution.csv"):
        assert read_csv(out / name)[0]["config_hash"] == config_hash(resolved)


def test_solve_zero_return(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--config", str(CONFIGS / "zero_return.json"), "--out", str(out)]) == EXIT_OK
    assert read_json(out / "solution.json")["lambda"] == 0.0


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "version": 1,\n  "model": {"builtin": "control_free",}\n}\n')
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert f"{path}:3:" in capsys.readouterr().err


def test_schema_violation_has_line(tmp_path, capsys):
    body = {"version": 1, "model": {"builtin": "control_free"}, "solver": {"gamma": 0.5}}
    path = write_config(tmp_path, body)
    assert main(["solve", "--config", str(path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "solver/gamma" in err
    line = path.read_text().splitlines().index('    "gamma": 0.5') + 1
    assert f"{path}:{line}:" in err


@pytest.mark.parametrize("body", [
    {"version": 2, "model": {"builtin": "control_free"}},
    {"version": 1, "model": {"builtin": "nope"}},
    {"version": 1, "model": {"builtin": "control_free", "params": {"bogus": 1}}},
    {"version": 1, "model": {"builtin": "example2_clipped", "params": {"rho": 2.0}}},
    {"version": 1},
    {"version": 1, "model": {"builtin": "control_free"}, "extra": {}},
])
def test_invalid_configs(tmp_path, body):
    path = write_config(tmp_path, body)
    assert main(["solve", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_file_and_bad_flags(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    cfg = write_config(tmp_path, CONTROL_FREE)
    assert main(["solve", "--config", str(cfg), "--threads", "0"]) == EXIT_CONFIG
    assert main(["solve", "--config", str(cfg), "--format", "xml"]) == EXIT_CONFIG
    assert main(["solve", "--config", str(cfg), "--seed", str(2**64)]) == EXIT_CONFIG
    assert main(["launch"]) == EXIT_CONFIG


def test_non_convergence(tmp_path):
    body = {"version": 1, "model": {"builtin": "example2_clipped", "params": {"grid_points": 21}},
            "solver": {"tol": 1e-15, "max_iter": 2}}
    cfg = write_config(tmp_path, body)
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == EXIT_NONCONVERGED
    assert read_json(out / "solution.json")["converged"] is False
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == EXIT_NONCONVERGED


def test_diagnose_exit_codes(tmp_path):
    out = tmp_path / "nm"
    assert main(["diagnose", "--config", str(CONFIGS / "no_mixing.json"), "--out", str(out)]) == EXIT_CERTIFICATE
    cert = read_json(out / "diagnostics.json")["certificate"]
    assert not cert["ok"] and cert["sampled"]

    out = tmp_path / "cf"
    assert main(["diagnose", "--config", str(CONFIGS / "control_free.json"), "--out", str(out)]) == EXIT_OK
    doc = read_json(out / "diagnostics.json")
    assert doc["certificate"]["global_doeblin"]
    assert any("global Doeblin" in n for n in doc["notes"])
    keys = {(r["section"], r["key"]) for r in read_csv(out / "diagnostics.csv")}
    assert ("certificate", "L") in keys and ("bound", "rsc_upper_bound") in keys


def test_diagnose_example2(tmp_path):
    body = {"version": 1, "model": {"builtin": "example2_clipped", "params": {"grid_points": 41}},
            "diagnose": {"samples": 8, "noise_draws": 512}}
    out = tmp_path / "out"
    assert main(["diagnose", "--config", str(write_config(tmp_path, body)), "--out", str(out)]) == EXIT_OK
    doc = read_json(out / "diagnostics.json")
    assert doc["certificate"]["L"] < 1
    assert doc["growth"]["ok"]
    assert 0 < doc["minorization"]["c"] <= 1


def test_sweep(tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(CONFIGS / "control_free.json"), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "sweep.csv")
    assert [float(r["lambda"]) for r in rows] == pytest.approx([-1.0, -0.5, -0.25, -0.05], abs=1e-9)
    checks = read_csv(out / "sweep_checks.csv")
    assert checks[0]["passed"] == "true"
    cfg = str(CONFIGS / "control_free.json")
    assert main(["sweep", "--config", cfg, "--out", str(out), "--gammas=-3,-1"]) == EXIT_OK
    assert [float(r["gamma"]) for r in read_csv(out / "sweep.csv")] == [-3.0, -1.0]
    assert main(["sweep", "--config", cfg, "--out", str(out), "--gammas", ""]) == EXIT_CONFIG
    assert main(["sweep", "--config", cfg, "--out", str(out), "--gammas=-1,0.5"]) == EXIT_CONFIG
    assert main(["sweep", "--config", cfg, "--out", str(out), "--gammas", "a,b"]) == EXIT_CONFIG
    empty = write_config(tmp_path, {**CONTROL_FREE, "sweep": {"gammas": []}})
    assert main(["sweep", "--config", str(empty), "--out", str(out)]) == EXIT_CONFIG


def test_verify_zero_return(tmp_path):
    out = tmp_path / "out"
    assert main(["verify", "--config", str(CONFIGS / "zero_return.json"), "--out", str(out)]) == EXIT_OK
    doc = read_json(out / "verification.json")
    assert doc["ok"]
    assert all(r["estimate"] == 0.0 for r in doc["estimates"])
    assert {r["passed"] for r in read_csv(out / "verification_checks.csv")} == {"true"}


def _forced_failure(fn):
    def wrapped(*args, **kwargs):
        rep = fn(*args, **kwargs)
        rep.checks.append({"check": "forced", "value": 1.0, "threshold": 0.0,
                           "passed": False, "gating": True})
        return rep
    return wrapped


def test_verify_failing_check_exit(tmp_path, monkeypatch):
    import rsgrowth.cli as cli

    monkeypatch.setattr(cli, "verify", _forced_failure(cli.verify))
    out = tmp_path / "out"
    assert main(["verify", "--config", str(CONFIGS / "zero_return.json"), "--out", str(out)]) == EXIT_CHECK
    assert read_json(out / "verification.json")["ok"] is False


def test_formats(tmp_path):
    cfg = write_config(tmp_path, CONTROL_FREE)
    main(["solve", "--config", str(cfg), "--out", str(tmp_path / "j"), "--format", "json"])
    assert sorted(p.name for p in (tmp_path / "j").iterdir()) == ["resolved_config.json", "solution.json"]
    main(["solve", "--config", str(cfg), "--out", str(tmp_path / "c"), "--format", "csv"])
    names = sorted(p.name for p in (tmp_path / "c").iterdir())
    assert names == ["resolved_config.json", "solution.csv", "trace.csv", "value.csv"]


def test_override_precedence(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, {**CONTROL_FREE, "mc": {"seed": 5}, "output": {"directory": "x"}})
    assert load(cfg)["mc"]["seed"] == 5
    env = {"RSGROWTH_SEED": "9", "RSGROWTH_OUT": str(tmp_path / "env")}
    raw = read_json(cfg)
    r = resolve(raw, environ=env)
    assert r["mc"]["seed"] == 9 and r["output"]["directory"] == str(tmp_path / "env")
    r = resolve(raw, seed=11, out="flag", environ=env)
    assert r["mc"]["seed"] == 11 and r["output"]["directory"] == "flag"
    with pytest.raises(ConfigError):
        resolve(raw, environ={"RSGROWTH_SEED": "abc"})
    monkeypatch.setenv("RSGROWTH_OUT", str(tmp_path / "envout"))
    assert main(["solve", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "envout" / "solution.json").exists()


def test_hash_ignores_output_section(tmp_path):
    cfg = write_config(tmp_path, CONTROL_FREE)
    a = load(cfg, out="one")
    b = load(cfg, out="two", fmt="json")
    c = load(cfg, seed=3)
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_resolved_config_round_trip(tmp_path):
    cfg = write_config(tmp_path, {**CONTROL_FREE, "mc": {"seed": 17}})
    main(["solve", "--config", str(cfg), "--out", str(tmp_path / "a")])
    resolved = tmp_path / "a" / "resolved_config.json"
    assert main(["solve", "--config", str(resolved), "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("solution.json", "value.csv", "trace.csv", "solution.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_threads_do_not_change_outputs(tmp_path):
    body = {"version": 1, "model": {"builtin": "example2_clipped", "params": {"grid_points": 31}},
            "mc": {"horizons": [20, 40], "paths": 1500}}
    cfg = write_config(tmp_path, body)
    for threads in ("1", "3"):
        assert main(["verify", "--config", str(cfg), "--out", str(tmp_path / threads),
                     "--threads", threads]) == EXIT_OK
    for name in ("verification.json", "verification.csv", "verification_checks.csv"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "3" / name).read_bytes()


def test_schema_is_packaged():
    schema = load_schema()
    assert schema["properties"]["version"] == {"const": 1}


def test_console_entry_point(tmp_path):
    cfg = write_config(tmp_path, CONTROL_FREE)
    proc = subprocess.run([sys.executable, "-m", "rsgrowth.cli", "solve", "--config", str(cfg),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "rsgrowth.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "rsgrowth" in proc.stdout
