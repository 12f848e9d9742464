"""The batch Bayesian optimization loop with a hedged acquisition portfolio.

Each epoch fits a surrogate, lets every acquisition function nominate
``batch`` points through its GA, resamples near-duplicates, and fills the
batch slots by hedging over the functions. Results are appended to an
on-disk ledger after every epoch so interrupted runs can be resumed.

On-disk layout of a run directory::

    config.json    RunConfig snapshot
    ledger.jsonl   one evaluation per line
    epochs.jsonl   one line per completed epoch (hedge state, nominees, kernel)
    summary.json   best design and incumbent trace

Ledger lines always carry the keys ``epoch, source, weights, objective,
valid, timestamp`` in that order.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gp as gpm
from .acquisition import GAConfig, SearchSpace, kind_label, mutate_batch, parse_kind, propose_many
from .errors import DegenerateDenominator, EvaluatorFailure
from .evaluator import ExternalEvaluator, FunctionObjective
from .hedge import HedgeState, compute_rewards, normalize_rewards, select_batch

log = logging.getLogger(__name__)

BENCHMARK_OBJECTIVES = ("spherical", "rastrigin", "styblinski-tang", "amalgamated")
OBJECTIVES = BENCHMARK_OBJECTIVES + ("proxy", "external")
LEDGER_FIELDS = ("epoch", "source", "weights", "objective", "valid", "timestamp")

# spawn-key roles for the per-epoch random streams
_INIT, _GP, _MUTATE, _SELECT, _GA = 0, 1, 2, 3, 16


@dataclass(frozen=True)
class RunConfig:
    n_init: int = 50
    n_epochs: int = 75
    batch: int = 5
    beta: float = 0.5
    eta: float = 1.0
    seed: int = 0
    objective: str = "proxy"
    dim: int = 6
    evaluator: str | None = None
    evaluator_timeout: float = 60.0
    acquisitions: tuple = ("UCB:2.0", "EI:0.01", "PI:0.01", "SMC:1")
    init_sampling: str = "uniform"
    dup_tol: float = 1e-3
    gp_starts: int = 8
    gp_polish: int | None = 2
    gp_maxiter: int = 200
    ga_population: int = 64
    ga_generations: int = 60
    ga_elitism: int = 2
    ga_crossover_rate: float = 0.9
    ga_mutation_scale: float = 0.1
    ga_seeded: int = 0
    max_workers: int = 1
    record_timestamps: bool = False

    def __post_init__(self):
        object.__setattr__(self, "acquisitions", tuple(str(a) for a in self.acquisitions))
        if self.n_init < 2:
            raise ValueError("n_init must be at least 2")
        if self.batch < 1 or self.n_epochs < 0:
            raise ValueError("batch must be >= 1 and n_epochs >= 0")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError("beta must lie in [0, 1]")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}; choose from {OBJECTIVES}")
        if self.objective == "external" and not self.evaluator:
            raise ValueError("objective 'external' needs an evaluator command")
        if self.init_sampling not in ("uniform", "lhs"):
            raise ValueError("init_sampling must be 'uniform' or 'lhs'")
        if not self.acquisitions:
            raise ValueError("need at least one acquisition function")
        for a in self.acquisitions:
            parse_kind(a)
        self.ga_config()

    @property
    def kinds(self):
        return [parse_kind(a) for a in self.acquisitions]

    def ga_config(self):
        return GAConfig(population=self.ga_population, generations=self.ga_generations,
                        crossover_rate=self.ga_crossover_rate, mutation_scale=self.ga_mutation_scale,
                        elitism=self.ga_elitism, n_seeded=self.ga_seeded)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["acquisitions"] = list(self.acquisitions)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise KeyError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        return RunConfig.from_dict({**self.to_dict(), **changes})


@dataclass(frozen=True)
class EvaluationRecord:
    epoch: int
    source: str
    weights: tuple
    objective: float
    valid: bool
    wall_time: float | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(v) for v in self.weights))
        if not self.valid and self.objective != 0.0:
            raise ValueError("invalid designs must carry objective 0")

    def to_json(self):
        row = {"epoch": self.epoch, "source": self.source, "weights": list(self.weights),
               "objective": self.objective, "valid": self.valid, "timestamp": self.wall_time}
        return json.dumps(row)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(int(d["epoch"]), d["source"], tuple(d["weights"]), float(d["objective"]),
                   bool(d["valid"]), d.get("timestamp"))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    phi: tuple = ()
    p: tuple = ()
    sources: tuple = ()
    # (h, eps_f, sigma_n) of the surrogate fitted this epoch
    kernel: tuple | None = None
    jitter: float | None = None
    nominees: tuple = ()

    def to_json(self):
        k = None if self.kernel is None else {"h": list(self.kernel[0]), "eps_f": self.kernel[1],
                                             "sigma_n": self.kernel[2]}
        return json.dumps({"epoch": self.epoch, "phi": list(self.phi), "p": list(self.p),
                           "sources": list(self.sources), "kernel": k, "jitter": self.jitter,
                           "nominees": np.asarray(self.nominees, dtype=float).tolist()})

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        k = d.get("kernel")
        kernel = None if k is None else (tuple(k["h"]), k["eps_f"], k["sigma_n"])
        nominees = np.asarray(d["nominees"], dtype=float)
        return cls(int(d["epoch"]), tuple(d["phi"]), tuple(d["p"]), tuple(d["sources"]), kernel,
                   d.get("jitter"), _freeze(nominees))

    @property
    def kernel_params(self):
        if self.kernel is None:
            return None
        return gpm.KernelParams(self.kernel[0], self.kernel[1], self.kernel[2])

    @property
    def nominee_array(self):
        return np.asarray(self.nominees, dtype=float)


def _freeze(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return float(a)
    return tuple(_freeze(x) for x in a)


@dataclass(eq=False)
class RunLedger:
    config: RunConfig
    records: list = field(default_factory=list)
    epochs: list = field(default_factory=list)

    def __eq__(self, other):
        if not isinstance(other, RunLedger):
            return NotImplemented
        return self.config == other.config and self.records == other.records and self.epochs == other.epochs

    @property
    def epochs_completed(self):
        """Number of completed optimization epochs (the initial sample is epoch 0)."""
        return max(len(self.epochs) - 1, 0)

    @property
    def X(self):
        return np.array([r.weights for r in self.records], dtype=float)

    @property
    def y(self):
        return np.array([r.objective for r in self.records], dtype=float)

    def incumbent_trace(self):
        """Best valid objective after each epoch, starting with epoch 0; ``-inf`` if none yet."""
        n_done = len(self.epochs)
        trace, best = [], -np.inf
        k = 0
        for e in range(n_done):
            while k < len(self.records) and self.records[k].epoch <= e:
                r = self.records[k]
                if r.valid and r.objective > best:
                    best = r.objective
                k += 1
            trace.append(best)
        return trace

    def best(self):
        valid = [r for r in self.records if r.valid]
        if not valid:
            return None
        return max(valid, key=lambda r: r.objective)

    def top_designs(self, n=3, tol=1e-9):
        """Best ``n`` valid records with pairwise distinct weights, best first."""
        order = sorted((r for r in self.records if r.valid), key=lambda r: -r.objective)
        out = []
        for r in order:
            w = np.asarray(r.weights)
            if all(np.max(np.abs(w - np.asarray(o.weights))) > tol for o in out):
                out.append(r)
            if len(out) == n:
                break
        return out

    def last_improvement_epoch(self):
        trace = self.incumbent_trace()
        if not trace:
            return None
        return int(np.argmax(np.asarray(trace) == trace[-1]))

    def summary(self, finished_at=None):
        best = self.best()
        trace = [None if not np.isfinite(t) else t for t in self.incumbent_trace()]
        return {
            "config": self.config.to_dict(),
            "n_evaluations": len(self.records),
            "n_invalid": sum(not r.valid for r in self.records),
            "epochs_completed": self.epochs_completed,
            "best": None if best is None else {"weights": list(best.weights), "objective": best.objective,
                                               "epoch": best.epoch, "source": best.source},
            "incumbent_trace": trace,
            "last_improvement_epoch": self.last_improvement_epoch(),
            "finished_at": finished_at,
        }


def read_ledger(out_dir) -> RunLedger:
    """Load a run directory, keeping only epochs whose completion line was written."""
    out_dir = Path(out_dir)
    config = RunConfig.from_dict(json.loads((out_dir / "config.json").read_text()))
    epochs = []
    ep_path = out_dir / "epochs.jsonl"
    if ep_path.exists():
        for line in ep_path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                e = EpochRecord.from_json(line)
            except (ValueError, KeyError):
                # torn final line
                break
            if e.epoch != len(epochs):
                break
            epochs.append(e)
    records = []
    led_path = out_dir / "ledger.jsonl"
    if led_path.exists() and epochs:
        last = epochs[-1].epoch
        for line in led_path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                r = EvaluationRecord.from_json(line)
            except (ValueError, KeyError):
                break
            if r.epoch > last:
                break
            records.append(r)
    expected = (config.n_init + config.batch * (len(epochs) - 1)) if epochs else 0
    if len(records) != expected:
        raise ValueError(f"ledger in {out_dir} has {len(records)} records, expected {expected}")
    return RunLedger(config, records, epochs)


class _Writer:
    """Append-only persistence of a run directory."""

    def __init__(self, out_dir, ledger: RunLedger, fresh):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "config.json").write_text(json.dumps(ledger.config.to_dict(), indent=2, sort_keys=True) + "\n")
        # rewriting drops any partial epoch left by an interrupted run
        mode = "w"
        with open(self.dir / "ledger.jsonl", mode) as f:
            for r in ([] if fresh else ledger.records):
                f.write(r.to_json() + "\n")
        with open(self.dir / "epochs.jsonl", mode) as f:
            for e in ([] if fresh else ledger.epochs):
                f.write(e.to_json() + "\n")

    def append(self, records, epoch_record):
        with open(self.dir / "ledger.jsonl", "a") as f:
            for r in records:
                f.write(r.to_json() + "\n")
            f.flush()
            os.fsync(f.fileno())
        with open(self.dir / "epochs.jsonl", "a") as f:
            f.write(epoch_record.to_json() + "\n")
            f.flush()
            os.fsync(f.fileno())

    def summary(self, ledger, finished):
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat() if finished else None
        (self.dir / "summary.json").write_text(json.dumps(ledger.summary(stamp), indent=2) + "\n")


def search_space(config: RunConfig) -> SearchSpace:
    if config.objective in BENCHMARK_OBJECTIVES:
        from .objectives import BenchmarkFn
        return SearchSpace.from_benchmark(BenchmarkFn(config.objective, config.dim))
    return SearchSpace.dbm(config.dim - 1)


def build_objective(config: RunConfig, baselines=None):
    """Batch objective named by ``config``."""
    if config.objective in BENCHMARK_OBJECTIVES:
        from .objectives import BenchmarkFn
        return FunctionObjective(BenchmarkFn(config.objective, config.dim),
                                 max_workers=config.max_workers, name=config.objective)
    if config.objective == "proxy":
        from .baselines import generate_baselines
        from .objectives import shape_proxy_objective
        b = baselines or generate_baselines()

        def proxy(w):
            return shape_proxy_objective(w, b, return_validity=True)

        return FunctionObjective(proxy, max_workers=config.max_workers, name="proxy")
    return ExternalEvaluator(config.evaluator, timeout=config.evaluator_timeout)


def _stream(config, epoch, role):
    return np.random.SeedSequence(config.seed, spawn_key=(epoch, role))


def _evaluate(objective, X, config):
    results = objective.evaluate_batch(np.asarray(X, dtype=float))
    if len(results) != len(X):
        raise EvaluatorFailure(f"objective returned {len(results)} results for {len(X)} designs")
    stamp = time.time() if config.record_timestamps else None
    out = []
    for value, valid in results:
        value = float(value)
        valid = bool(valid) and bool(np.isfinite(value))
        out.append((value if valid else 0.0, valid, stamp))
    return out


def _initial_sample(config, space):
    rng = np.random.default_rng(_stream(config, 0, _INIT))
    if config.init_sampling == "lhs":
        return space.latin_hypercube(rng, config.n_init)
    return space.sample(rng, config.n_init)


def epoch_step(config, space, ledger: RunLedger, hedge: HedgeState, warm, epoch):
    """Choose the ``batch`` designs of ``epoch``.

    Returns the selected ``(design, function index)`` pairs, the epoch's
    hedge bookkeeping as a partially filled :class:`EpochRecord`, and the
    fitted surrogate.
    """
    kinds = config.kinds
    L, Q = len(kinds), config.batch
    X, y = ledger.X, ledger.y
    g = gpm.fit(X, y, space.lo, space.hi, n_starts=config.gp_starts, seed=_stream(config, epoch, _GP),
                warm_start=warm, n_polish=config.gp_polish, maxiter=config.gp_maxiter)
    seeds = [_stream(config, epoch, _GA + l) for l in range(L)]
    nominees = propose_many(kinds, g, space, Q, config.ga_config(), seeds, tol=config.dup_tol)
    mrng = np.random.default_rng(_stream(config, epoch, _MUTATE))
    nominees = np.array([mutate_batch(N, space, config.beta, config.dup_tol, seed=mrng) for N in nominees])
    rewarded = compute_rewards(g, hedge)
    phi = normalize_rewards(rewarded, L)
    chosen, p = select_batch(nominees, phi, config.eta, Q, seed=_stream(config, epoch, _SELECT))
    labels = [kind_label(k) for k in kinds]
    er = EpochRecord(epoch, tuple(float(v) for v in phi), tuple(float(v) for v in p),
                     tuple(labels[l] for _, l in chosen),
                     (g.params.h, g.params.eps_f, g.params.sigma_n), float(g.jitter), _freeze(nominees))
    return chosen, er, g


def run(config: RunConfig, objective=None, out_dir=None, resume=False, progress=None) -> RunLedger:
    """Run (or continue) an optimization.

    Parameters
    ----------
    config : RunConfig
    objective : object, optional
        Anything with ``evaluate_batch(X) -> [(value, valid), ...]``, or a
        plain callable of one design. Built from ``config`` if omitted.
    out_dir : path, optional
        Run directory for incremental persistence.
    resume : bool
        Continue the run stored in ``out_dir``; ``config`` must match it.
    progress : callable, optional
        Called as ``progress(epoch, ledger)`` after every epoch.

    Raises
    ------
    EvaluatorFailure
        The objective failed. Completed epochs stay on disk.
    """
    if objective is None:
        objective = build_objective(config)
        owned = True
    else:
        owned = False
        if not hasattr(objective, "evaluate_batch"):
            objective = FunctionObjective(objective, max_workers=config.max_workers)
    space = search_space(config)

    if resume:
        if out_dir is None:
            raise ValueError("resume needs a run directory")
        ledger = read_ledger(out_dir)
        if ledger.config != config:
            raise ValueError("config differs from the one stored in the run directory")
    else:
        ledger = RunLedger(config)
    writer = _Writer(out_dir, ledger, fresh=not resume) if out_dir is not None else None

    hedge = HedgeState(config.eta, tuple(e.nominee_array for e in ledger.epochs[1:]))
    warm = ledger.epochs[-1].kernel_params if ledger.epochs else None
    try:
        if not ledger.epochs:
            X0 = _initial_sample(config, space)
            recs = [EvaluationRecord(0, "random", tuple(x), v, ok, t)
                    for x, (v, ok, t) in zip(X0, _evaluate(objective, X0, config))]
            er = EpochRecord(0)
            ledger.records.extend(recs)
            ledger.epochs.append(er)
            if writer:
                writer.append(recs, er)
            if progress:
                progress(0, ledger)
        for epoch in range(len(ledger.epochs), config.n_epochs + 1):
            chosen, er, g = epoch_step(config, space, ledger, hedge, warm, epoch)
            Xb = np.array([x for x, _ in chosen])
            results = _evaluate(objective, Xb, config)
            recs = [EvaluationRecord(epoch, src, tuple(x), v, ok, t)
                    for x, src, (v, ok, t) in zip(Xb, er.sources, results)]
            ledger.records.extend(recs)
            ledger.epochs.append(er)
            hedge = hedge.record(er.nominee_array)
            warm = g.params
            if writer:
                writer.append(recs, er)
            if progress:
                progress(epoch, ledger)
    except EvaluatorFailure as exc:
        if writer:
            writer.summary(ledger, finished=False)
            raise EvaluatorFailure(f"{exc}; {ledger.epochs_completed} epochs saved in {writer.dir}, "
                                   f"continue with: morphbo resume --out {writer.dir}") from exc
        raise
    finally:
        if owned:
            objective.close()
    if writer:
        writer.summary(ledger, finished=True)
    return ledger


def _trace_of(ledger_or_trace):
    if isinstance(ledger_or_trace, RunLedger):
        return ledger_or_trace.incumbent_trace()
    return [float(v) for v in ledger_or_trace]


def normalized_reward(ledger, global_opt):
    """``(incumbent - initial best) / (global_opt - initial best)`` for epochs 1..N."""
    trace = _trace_of(ledger)
    if not trace:
        return []
    r0 = trace[0]
    denom = global_opt - r0
    if denom == 0 or not np.isfinite(denom):
        raise DegenerateDenominator("global optimum equals the initial-sample best")
    return [(t - r0) / denom for t in trace[1:]]


def normalized_objective(ledger, reference, best):
    """``(incumbent - reference) / (best - reference)`` for epochs 0..N."""
    trace = _trace_of(ledger)
    denom = best - reference
    if denom == 0:
        raise DegenerateDenominator("best equals the reference value")
    return [(t - reference) / denom for t in trace]
