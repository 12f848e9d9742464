import json
import sys

import numpy as np
import pytest

from morphbo.errors import DegenerateDenominator, EvaluatorFailure
from morphbo.evaluator import ExternalEvaluator
from morphbo.optimizer import (
    EvaluationRecord,
    RunConfig,
    normalized_objective,
    normalized_reward,
    read_ledger,
    run,
    search_space,
)

ECHO = [sys.executable, "-m", "morphbo.echo_evaluator"]

# small surrogate budget so each run takes well under a second per epoch
FAST = dict(ga_population=16, ga_generations=6, ga_seeded=4, gp_starts=2, gp_polish=1, gp_maxiter=60)


def _cfg(**kw):
    base = dict(objective="spherical", dim=3, n_init=8, n_epochs=5, batch=3, seed=4, **FAST)
    base.update(kw)
    return RunConfig(**base)


def test_budget_is_init_plus_epochs_times_batch():
    cfg = RunConfig(objective="spherical", n_init=50, n_epochs=75, batch=5, ga_population=8, ga_generations=1,
                    ga_seeded=2, gp_starts=1, gp_polish=0, gp_maxiter=5)
    ledger = run(cfg)
    assert len(ledger.records) == 425
    assert ledger.epochs_completed == 75
    assert [sum(r.epoch == e for r in ledger.records) for e in range(76)] == [50] + [5] * 75


def test_zero_epochs_reports_initial_best():
    ledger = run(_cfg(n_epochs=0))
    assert len(ledger.records) == 8
    assert ledger.incumbent_trace() == [max(r.objective for r in ledger.records)]
    assert normalized_reward(ledger, 0.0) == []


def test_run_is_bitwise_reproducible(tmp_path):
    a = run(_cfg(), out_dir=tmp_path / "a")
    b = run(_cfg(), out_dir=tmp_path / "b")
    assert a == b
    for name in ("ledger.jsonl", "epochs.jsonl", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert run(_cfg(seed=5)) != a


def test_ledger_invariants():
    cfg = _cfg(n_epochs=6)
    ledger = run(cfg)
    space = search_space(cfg)
    assert np.allclose(space.lower, -10.0) and np.allclose(space.upper, 10.0)
    assert space.contains(ledger.X)
    epochs = [r.epoch for r in ledger.records]
    assert epochs == sorted(epochs)
    trace = ledger.incumbent_trace()
    assert len(trace) == 7 and np.all(np.diff(trace) >= 0)
    labels = {"UCB:2.0", "EI:0.01", "PI:0.01", "SMC:1"}
    for e in ledger.epochs[1:]:
        assert abs(sum(e.p) - 1) <= 1e-12
        assert set(e.sources) <= labels
        recs = [r for r in ledger.records if r.epoch == e.epoch]
        N = e.nominee_array
        assert N.shape == (4, 3, 3)
        # every evaluated design is in its source function's nominee list
        for r in recs:
            l = cfg.acquisitions.index(r.source)
            assert any(np.array_equal(r.weights, n) for n in N[l])
    assert all(r.source == "random" for r in ledger.records if r.epoch == 0)


def test_invalid_designs_score_zero():
    def half_invalid(w):
        return float(np.sum(w)), bool(w[0] > 0)

    ledger = run(_cfg(objective="proxy", dim=6, n_epochs=2), objective=half_invalid)
    bad = [r for r in ledger.records if not r.valid]
    assert bad and all(r.objective == 0.0 for r in bad)
    with pytest.raises(ValueError):
        EvaluationRecord(0, "random", (0.0,), 1.0, False)


def test_nonfinite_objective_is_invalid():
    ledger = run(_cfg(n_epochs=1), objective=lambda w: float("nan") if w[0] > 0 else -float(w @ w))
    for r in ledger.records:
        assert np.isfinite(r.objective)
        assert r.valid == (r.weights[0] <= 0)


def _truncate(run_dir, keep_epoch, partial):
    ep = (run_dir / "epochs.jsonl").read_text().splitlines()
    (run_dir / "epochs.jsonl").write_text("\n".join(ep[: keep_epoch + 1]) + "\n")
    lines = (run_dir / "ledger.jsonl").read_text().splitlines()
    limit = keep_epoch + (1 if partial else 0)
    kept = [l for l in lines if json.loads(l)["epoch"] <= limit]
    (run_dir / "ledger.jsonl").write_text("\n".join(kept) + "\n")


@pytest.mark.parametrize("partial", [False, True])
def test_resume_matches_uninterrupted(tmp_path, partial):
    cfg = _cfg(n_epochs=6)
    full = run(cfg, out_dir=tmp_path / "full")
    cut = tmp_path / "cut"
    run(cfg, out_dir=cut)
    _truncate(cut, 3, partial)
    assert read_ledger(cut).epochs_completed == 3
    resumed = run(cfg, out_dir=cut, resume=True)
    assert resumed == full
    for name in ("ledger.jsonl", "epochs.jsonl"):
        assert (cut / name).read_bytes() == (tmp_path / "full" / name).read_bytes()


def test_resume_rejects_changed_config(tmp_path):
    run(_cfg(n_epochs=1), out_dir=tmp_path)
    with pytest.raises(ValueError):
        run(_cfg(n_epochs=1, beta=0.2), out_dir=tmp_path, resume=True)


def test_evaluator_failure_keeps_completed_epochs(tmp_path):
    cfg = RunConfig(objective="external", evaluator=" ".join(ECHO), n_init=6, n_epochs=4, batch=2, seed=1,
                    **FAST)
    # dies during the third optimization epoch
    dying = ExternalEvaluator(ECHO + ["--die-after", str(6 + 2 * 2 + 1)], timeout=5)
    with pytest.raises(EvaluatorFailure, match="morphbo resume --out"):
        run(cfg, objective=dying, out_dir=tmp_path)
    dying.close()
    saved = read_ledger(tmp_path)
    assert saved.epochs_completed == 2 and len(saved.records) == 10
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["finished_at"] is None
    with ExternalEvaluator(ECHO, timeout=5) as ev:
        resumed = run(cfg, objective=ev, out_dir=tmp_path, resume=True)
    assert resumed == run(cfg)
    assert json.loads((tmp_path / "summary.json").read_text())["finished_at"] is not None


def test_echo_run_finds_large_first_weight():
    cfg = RunConfig(objective="external", evaluator=" ".join(ECHO), n_init=10, n_epochs=6, batch=3, seed=0,
                    **FAST)
    best = run(cfg).best()
    assert best.weights[0] >= 0.9


def test_normalized_reward_examples():
    # incumbent 5, initial best 0, global optimum 10
    assert normalized_reward([0.0, 5.0], 10.0) == [0.5]
    assert normalized_reward([2.0, 2.0, 6.0, 10.0], 10.0) == [0.0, 0.5, 1.0]
    with pytest.raises(DegenerateDenominator):
        normalized_reward([3.0, 3.0], 3.0)


def test_normalized_objective_example():
    v = normalized_objective([0.9370, 0.9607], 0.9370, 0.9620)
    assert v[0] == 0.0
    assert v[1] == pytest.approx(0.948, abs=1e-12)
    with pytest.raises(DegenerateDenominator):
        normalized_objective([1.0], 1.0, 1.0)


def test_config_round_trip_and_validation():
    cfg = _cfg()
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(KeyError):
        RunConfig.from_dict({"n_inti": 5})
    for bad in (dict(n_init=1), dict(batch=0), dict(beta=1.5), dict(eta=0.0), dict(objective="nope"),
                dict(objective="external"), dict(init_sampling="sobol")):
        with pytest.raises(ValueError):
            RunConfig(**bad)


def test_top_designs_distinct_and_sorted():
    ledger = run(_cfg(n_epochs=3))
    top = ledger.top_designs(3)
    assert len(top) == 3
    obj = [r.objective for r in top]
    assert obj == sorted(obj, reverse=True)
    assert len({r.weights for r in top}) == 3
    assert top[0] == ledger.best()
