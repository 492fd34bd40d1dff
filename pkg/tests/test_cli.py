import csv
import json
import subprocess
import sys

import pytest

from tfkit.cli import DEFAULTS, EXIT_CONFIG, EXIT_PASS, EXIT_PRECONDITION, main

SMALL = {
    "multiplier": {"betas": [1.0, 0.5], "per_octave": 512, "points_per_r": 64},
    "reconstruct": {"n": 256, "spacing": 0.25, "beta": 0.5, "f1_modes": [4, 12, -8], "f2_modes": [-6, 10, 2],
                    "eta_range": [-20.0, 20.0], "per_octave": 128, "eta_per_r": 32, "tol": 0.5},
    "sweep-beta": {"betas": [1.0, 0.5, 0.25], "triples": [[2.0, 2.0, 1.0]], "pairs": 2, "n": 128},
    "norms": {"n": 64, "modes": 3},
    "cover": {"n": 64, "points": [16, 24, 6]},
    "check": {"trials": 1, "n": 64, "modes": 2},
}

HEADERS = {
    "multiplier": "beta,C_beta,lower_bound,upper_bound",
    "reconstruct": "region_index,rel_L2_error,tail_estimate",
    "sweep-beta": "triple,p1,p2,p,pair,beta,ratio",
    "norms": "lambda,measure,residual",
    "cover": "xi,x,s,mass",
    "check": "kind,param,ratio",
}


def run(tmp_path, command, cfg, name="out", seed=0):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    return main([command, "--config", str(path), "--out", str(out), "--seed", str(seed)]), out


@pytest.mark.parametrize("command", sorted(SMALL))
def test_small_configs_run(tmp_path, command):
    code, out = run(tmp_path, command, SMALL[command])
    assert code in (0, 1)
    with open(out / f"{command}.csv") as fh:
        assert fh.readline().strip() == HEADERS[command]
    report = json.loads((out / f"{command}.json").read_text())
    assert report["command"] == command
    assert len(report["config_hash"]) == 64
    assert set(report["versions"]) >= {"numpy", "scipy"}


def test_multiplier_passes_and_is_deterministic(tmp_path):
    a, out_a = run(tmp_path, "multiplier", SMALL["multiplier"], "a")
    b, out_b = run(tmp_path, "multiplier", SMALL["multiplier"], "b")
    assert a == b == EXIT_PASS
    for suffix in ("csv", "json"):
        assert (out_a / f"multiplier.{suffix}").read_bytes() == (out_b / f"multiplier.{suffix}").read_bytes()
    rows = list(csv.DictReader(open(out_a / "multiplier.csv")))
    assert [float(r["beta"]) for r in rows] == [1.0, 0.5]


def test_seed_changes_hash(tmp_path):
    _, a = run(tmp_path, "norms", SMALL["norms"], "a", seed=1)
    _, b = run(tmp_path, "norms", SMALL["norms"], "b", seed=2)
    ha = json.loads((a / "norms.json").read_text())["config_hash"]
    hb = json.loads((b / "norms.json").read_text())["config_hash"]
    assert ha != hb


def test_unknown_key_is_config_error(tmp_path):
    code, _ = run(tmp_path, "multiplier", {"bogus": 1})
    assert code == EXIT_CONFIG


def test_bad_json_and_seed(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["multiplier", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["multiplier", "--seed", "-1", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["multiplier", "--threads", "0", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_support_separation_is_precondition_failure(tmp_path):
    cfg = dict(SMALL["reconstruct"], r=0.45, beta=1.0)
    code, _ = run(tmp_path, "reconstruct", cfg)
    assert code == EXIT_PRECONDITION


def test_defaults_cover_every_command():
    assert set(DEFAULTS) == set(SMALL)


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(SMALL["multiplier"]))
    proc = subprocess.run([sys.executable, "-m", "tfkit", "multiplier", "--config", str(cfg),
                           "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "multiplier: pass" in proc.stdout
