import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from morphbo.cli import main

ECHO = f"{sys.executable} -m morphbo.echo_evaluator"
FAST = ["--set", "ga_population=16", "--set", "ga_generations=6", "--set", "ga_seeded=4",
        "--set", "gp_starts=2", "--set", "gp_polish=1", "--set", "gp_maxiter=60"]


def _rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_morph_identity(tmp_path):
    assert main(["morph", "1", "0", "0", "0", "0", "1", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "validity.json").read_text())["valid"] is True
    for name in ("tube.obj", "hub.obj", "top_profile.csv"):
        assert (tmp_path / name).stat().st_size > 0
    prof = _rows(tmp_path / "top_profile.csv")
    assert len(prof) == 64 and prof[0]["j"] == "0"


def test_morph_optimal_row(tmp_path):
    assert main(["morph", "0.90", "-0.14", "0.22", "-0.25", "0.99", "0.99", "--out", str(tmp_path)]) == 0


def test_morph_zero_sum_rejected(tmp_path, capsys):
    assert main(["morph", "0", "0", "0", "0", "0", "0.5", "--out", str(tmp_path)]) != 0
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "tube.obj").exists()


def test_morph_out_of_range_weight(tmp_path):
    assert main(["morph", "1.5", "0", "0", "0", "0", "0.5", "--out", str(tmp_path)]) == 2


def test_bench_zero_epochs(tmp_path):
    argv = ["bench", "spherical", "--seeds", "2", "--epochs", "0", "--init", "6", "--out", str(tmp_path)]
    assert main(argv) == 0
    assert _rows(tmp_path / "trace.csv") == []
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["final_normalized_reward"] == [0.0, 0.0]
    assert s["final_best"] == s["initial_sample_best"]


def test_bench_trace_is_byte_identical(tmp_path):
    argv = ["bench", "spherical", "--dim", "3", "--seeds", "2", "--epochs", "3", "--init", "8", "--batch", "3"] + FAST
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    a, b = (tmp_path / "a" / "trace.csv").read_bytes(), (tmp_path / "b" / "trace.csv").read_bytes()
    assert a == b
    rows = _rows(tmp_path / "a" / "trace.csv")
    assert [r["epoch"] for r in rows] == ["1", "2", "3"]
    s = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert all(v <= 1 + 1e-9 for v in s["final_normalized_reward"])
    assert (tmp_path / "a" / "seed_0" / "ledger.jsonl").exists()


def test_bench_rejects_non_benchmark(tmp_path):
    assert main(["bench", "proxy", "--out", str(tmp_path)]) == 2


def test_optimize_proxy_reports_top_three(tmp_path):
    argv = ["optimize", "--objective", "proxy", "--init", "12", "--epochs", "3", "--batch", "3",
            "--out", str(tmp_path)] + FAST
    assert main(argv) == 0
    rows = _rows(tmp_path / "top_designs.csv")
    ranked = [r for r in rows if r["source"] != "baseline"]
    assert [r["rank"] for r in ranked] == ["1", "2", "3"]
    obj = [float(r["objective"]) for r in ranked]
    assert obj == sorted(obj, reverse=True)
    assert len({tuple(r[k] for k in ("w1", "w2", "w3", "w4", "w5", "alpha1")) for r in ranked}) == 3
    for r in ranked:
        w = [float(r[k]) for k in ("w1", "w2", "w3", "w4", "w5", "alpha1")]
        assert r["has_negative_weight"] == str(int(min(w) < 0))
    assert rows[-1]["rank"] == "sharp-heel"
    assert (tmp_path / "best_tube.obj").exists() and (tmp_path / "best_hub.obj").exists()
    trace = _rows(tmp_path / "trace.csv")
    assert len(trace) == 4


def test_optimize_with_echo_evaluator(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_init": 10, "n_epochs": 6, "batch": 3, "seed": 0}))
    argv = ["optimize", "--config", str(cfg), "--evaluator", ECHO, "--out", str(tmp_path / "run")] + FAST
    assert main(argv) == 0
    best = _rows(tmp_path / "run" / "top_designs.csv")[0]
    assert float(best["w1"]) >= 0.9


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_init": 10, "batch_size": 3}))
    assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 2
    assert "batch_size" in capsys.readouterr().err
    assert main(["optimize", "--set", "nope=1", "--out", str(tmp_path / "r")]) == 2


def test_resume_continues_run(tmp_path):
    base = ["optimize", "--objective", "spherical", "--init", "8", "--batch", "2", "--out", str(tmp_path / "a")]
    base += FAST + ["--set", "dim=3"]
    assert main(base + ["--epochs", "4"]) == 0
    full = (tmp_path / "a" / "ledger.jsonl").read_bytes()
    ep = (tmp_path / "a" / "epochs.jsonl").read_text().splitlines()
    (tmp_path / "a" / "epochs.jsonl").write_text("\n".join(ep[:3]) + "\n")
    assert main(["resume", "--out", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "ledger.jsonl").read_bytes() == full
    assert main(["resume", "--out", str(tmp_path / "missing")]) == 2


def test_out_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("MORPHBO_OUT", str(tmp_path))
    assert main(["morph", "1", "0", "0", "0", "0", "1"]) == 0
    assert (tmp_path / "morph" / "tube.obj").exists()


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "morphbo.cli", "morph", "1", "0", "0", "0", "0", "1", "--out",
                          str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    pts = [l for l in (tmp_path / "tube.obj").read_text().splitlines() if l.startswith("v ")]
    assert np.isfinite(np.array([l.split()[1:] for l in pts], dtype=float)).all()


def test_invalid_morph_exit_code(tmp_path):
    # near-cancelling weights fold the cross-sections into each other
    code = main(["morph", "-0.5", "1", "-0.5", "-0.5", "0.6", "0", "--out", str(tmp_path)])
    assert code == 1
    report = json.loads((tmp_path / "validity.json").read_text())
    assert report["valid"] is False
    assert not (tmp_path / "tube.obj").exists()
