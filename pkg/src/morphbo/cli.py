"""Command-line entry point.

Subcommands::

    morphbo bench FN [--seeds N] [--dim D] ...
    morphbo optimize [--config FILE] ...
    morphbo resume --out DIR
    morphbo morph W1 W2 W3 W4 W5 A1 [--out DIR]

Run options come from a flat JSON config file whose keys mirror
:class:`~morphbo.optimizer.RunConfig`; ``--set key=value`` and the
dedicated flags override it. Outputs go under ``--out`` or, failing that,
``$MORPHBO_OUT`` (default ``./runs``).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import EvaluatorFailure, InvalidShape, MorphBOError, ZeroWeightSum
from .optimizer import BENCHMARK_OBJECTIVES, RunConfig, normalized_objective, normalized_reward, run

log = logging.getLogger("morphbo")

OUT_ENV = "MORPHBO_OUT"


def _out_root(args, default_name):
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_ENV, "runs")) / default_name


def _coerce(key, text):
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    if key not in fields:
        raise KeyError(f"unknown config key {key!r}")
    if key == "acquisitions":
        return [s.strip() for s in text.split(",") if s.strip()]
    if key in ("objective", "evaluator", "init_sampling"):
        return None if text in ("", "null", "none") else text
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(args, **extra) -> RunConfig:
    """RunConfig from ``--config``, flags and ``--set`` overrides (later wins)."""
    d = {}
    if getattr(args, "config", None):
        d = json.loads(Path(args.config).read_text())
        if not isinstance(d, dict):
            raise ValueError("config file must hold a JSON object")
    d.update(extra)
    flags = {"seed": args.seed, "objective": args.objective, "evaluator": args.evaluator,
             "n_epochs": args.epochs, "batch": args.batch, "n_init": args.init}
    d.update({k: v for k, v in flags.items() if v is not None})
    if args.evaluator is not None and args.objective is None:
        d["objective"] = "external"
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        d[key.strip()] = _coerce(key.strip(), value.strip())
    return RunConfig.from_dict(d)


def _fmt(v):
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_bench(args):
    extra = {"objective": args.function.lower(), "dim": args.dim}
    try:
        config = load_config(args, **extra)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if config.objective not in BENCHMARK_OBJECTIVES:
        print(f"error: {config.objective!r} is not a benchmark; choose from {BENCHMARK_OBJECTIVES}",
              file=sys.stderr)
        return 2
    from .objectives import BenchmarkFn, benchmark_optimum

    _, opt = benchmark_optimum(BenchmarkFn(config.objective, config.dim))
    root = _out_root(args, config.objective)
    root.mkdir(parents=True, exist_ok=True)
    seeds = [config.seed + i for i in range(args.seeds)]
    rewards, initial_best, final_best = [], [], []
    for s in seeds:
        cfg = config.replace(seed=s)
        ledger = run(cfg, out_dir=root / f"seed_{s}")
        nr = normalized_reward(ledger, opt)
        if any(v > 1.0 + 1e-9 for v in nr):
            log.warning("seed %d: normalized reward above 1", s)
        rewards.append(nr)
        trace = ledger.incumbent_trace()
        initial_best.append(trace[0])
        final_best.append(trace[-1])
        print(f"seed {s}: best {trace[-1]!r}  final normalized reward "
              f"{nr[-1] if nr else 0.0:.6f}", flush=True)
    R = np.array(rewards, dtype=float).reshape(len(seeds), config.n_epochs)
    mean, std = R.mean(axis=0), R.std(axis=0)
    _write_csv(root / "trace.csv", ["epoch", "mean", "std"],
               [[e + 1, _fmt(m), _fmt(s)] for e, (m, s) in enumerate(zip(mean, std))])
    summary = {
        "function": config.objective,
        "dim": config.dim,
        "seeds": seeds,
        "global_optimum": opt,
        "initial_sample_best": initial_best,
        "final_best": final_best,
        "final_normalized_reward": [r[-1] if r else 0.0 for r in rewards],
        "band_lower": (mean - 0.2 * std).tolist(),
        "band_upper": (mean + 0.2 * std).tolist(),
    }
    (root / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"wrote {root}")
    return 0


def _export_design(root, ledger, baselines=None):
    """Top-3 table, normalized trace and the incumbent's geometry."""
    from .baselines import generate_baselines, morph_design
    from .morph import MorphWeights, project_to_3d
    from .objectives import shape_proxy_objective

    top = ledger.top_designs(3)
    header = ["rank", "w1", "w2", "w3", "w4", "w5", "alpha1", "objective", "has_negative_weight", "epoch",
              "source"]
    rows = [[i + 1] + [_fmt(v) for v in r.weights] + [_fmt(r.objective), int(min(r.weights) < 0), r.epoch,
                                                       r.source] for i, r in enumerate(top)]
    b = baselines or generate_baselines()
    ref = None
    if ledger.config.objective == "proxy":
        w_ref = (1.0, 0.0, 0.0, 0.0, 0.0, 0.5)
        ref = shape_proxy_objective(w_ref, b)
        rows.append(["sharp-heel"] + [_fmt(v) for v in w_ref] + [_fmt(ref), 0, "", "baseline"])
    _write_csv(root / "top_designs.csv", header, rows)
    trace = ledger.incumbent_trace()
    if ref is not None and top and top[0].objective != ref:
        norm = normalized_objective(ledger, ref, top[0].objective)
        _write_csv(root / "trace.csv", ["epoch", "incumbent", "normalized"],
                   [[e, _fmt(t), _fmt(n)] for e, (t, n) in enumerate(zip(trace, norm))])
    else:
        _write_csv(root / "trace.csv", ["epoch", "incumbent"], [[e, _fmt(t)] for e, t in enumerate(trace)])
    if top:
        w = MorphWeights.from_vector(top[0].weights, b.n_tube)
        try:
            tube, hub = morph_design(b, w)
            project_to_3d(tube, b.tube_curve, b.r_min).write_obj(root / "best_tube.obj")
            project_to_3d(hub, b.hub_curve, b.r_min).write_obj(root / "best_hub.obj")
        except (ZeroWeightSum, InvalidShape) as exc:
            log.warning("incumbent geometry not exported: %s", exc)
    for i, r in enumerate(top):
        print(f"#{i + 1}: objective {r.objective!r} weights {list(r.weights)}")
    if ref is not None:
        print(f"sharp-heel reference: {ref!r}")


def cmd_optimize(args):
    try:
        config = load_config(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    root = _out_root(args, f"{config.objective}_seed{config.seed}")
    return _run_and_export(config, root, resume=False)


def cmd_resume(args):
    root = Path(args.out) if args.out else None
    if root is None or not (root / "config.json").exists():
        print("error: --out must name an existing run directory", file=sys.stderr)
        return 2
    config = RunConfig.from_dict(json.loads((root / "config.json").read_text()))
    return _run_and_export(config, root, resume=True)


def _run_and_export(config, root, resume):
    try:
        ledger = run(config, out_dir=root, resume=resume)
    except EvaluatorFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if config.objective not in BENCHMARK_OBJECTIVES:
        _export_design(root, ledger)
    print(f"wrote {root}")
    return 0


def cmd_morph(args):
    from .baselines import generate_baselines, morph_design, validate_design
    from .morph import MorphWeights, project_to_3d

    root = _out_root(args, "morph")
    try:
        w = MorphWeights.from_vector(args.weights)
    except (ValueError, MorphBOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    b = generate_baselines()
    try:
        tube, hub = morph_design(b, w)
    except ZeroWeightSum as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = validate_design(b, tube, hub)
    root.mkdir(parents=True, exist_ok=True)
    (root / "validity.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    if not report.valid:
        print(f"invalid shape: {json.dumps(report.to_dict())}", file=sys.stderr)
        return 1
    project_to_3d(tube, b.tube_curve, b.r_min).write_obj(root / "tube.obj")
    project_to_3d(hub, b.hub_curve, b.r_min).write_obj(root / "hub.obj")
    s = tube.grid.arc_positions
    _write_csv(root / "top_profile.csv", ["j", "s", "R0"],
               [[j, _fmt(s[j]), _fmt(r)] for j, r in enumerate(tube.top_profile)])
    print(f"wrote {root}")
    return 0


def _run_flags(p):
    p.add_argument("--config", help="JSON file with RunConfig keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--objective", help="proxy, external or a benchmark name")
    p.add_argument("--evaluator", help="external evaluator command line")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--init", type=int, help="number of initial random samples")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any RunConfig key")


def build_parser():
    ap = argparse.ArgumentParser(prog="morphbo", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="run a benchmark function over several seeds")
    p.add_argument("function")
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds")
    _run_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("optimize", help="optimize a shape against the proxy or an evaluator")
    _run_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("resume", help="continue an interrupted run")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("morph", help="morph the baselines and export geometry")
    p.add_argument("weights", type=float, nargs=6, metavar="W")
    p.add_argument("--out")
    p.set_defaults(func=cmd_morph)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, MorphBOError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
