"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from morphbo import kernels


def cases(rng):
    X = rng.random((425, 6))
    P = rng.random((64, 6))
    inv_h = np.full(6, 3.0)
    R = rng.uniform(0.5, 1.0, (72, 64))
    return {
        "se_cross 64x425x6": lambda m: m.se_cross(P, X, inv_h, 1.0),
        "sq_diffs 425x6": lambda m: m.sq_diffs(X),
        # each backend consumes its own diffs layout, as in the GP fit
        "se_gram_from_diffs 425": lambda m, D={}: m.se_gram_from_diffs(
            D.setdefault(m.__name__, m.sq_diffs(X)), inv_h**2, 1.0),
        "polygon_areas 72x64": lambda m: m.polygon_areas(R, 2 * np.pi / 72),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    mods = kernels.backends()
    names = sorted(mods)
    print(f"{'kernel':28s}" + "".join(f"{n:>14s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, f in cases(np.random.default_rng(0)).items():
        t = {}
        for n in names:
            timer = timeit.Timer(lambda: f(mods[n]))
            k, _ = timer.autorange()
            t[n] = min(timer.repeat(args.repeat, k)) / k
        line = f"{label:28s}" + "".join(f"{t[n] * 1e6:12.1f}us" for n in names)
        if "cython" in t:
            line += f"{t['python'] / t['cython']:11.2f}x"
        print(line)
    if "cython" not in mods:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
