"""Acquisition functions and the genetic algorithm that maximizes them.

Scores are computed on the surrogate's standardized scale inside
:func:`propose`, so ``xi`` is measured in target standard deviations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .gp import GaussianSurrogate, sample_posterior


@dataclass(frozen=True)
class UCB:
    kappa: float = 2.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    name = "UCB"


@dataclass(frozen=True)
class EI:
    xi: float = 0.01

    def __post_init__(self):
        if not self.xi >= 0:
            raise ValueError("xi must be nonnegative")

    name = "EI"


@dataclass(frozen=True)
class PI:
    xi: float = 0.01

    def __post_init__(self):
        if not self.xi >= 0:
            raise ValueError("xi must be nonnegative")

    name = "PI"


@dataclass(frozen=True)
class SMC:
    """Stochastic Monte-Carlo: mean of ``n_draws`` posterior samples."""

    n_draws: int = 1

    def __post_init__(self):
        if int(self.n_draws) < 1:
            raise ValueError("n_draws must be at least 1")

    name = "SMC"


DEFAULT_PORTFOLIO = (UCB(), EI(), PI(), SMC())


def parse_kind(text):
    """``"UCB"``, ``"EI:0.05"``, ``"SMC:4"`` -> acquisition object."""
    name, _, arg = str(text).partition(":")
    name = name.strip().upper()
    table = {"UCB": (UCB, float), "EI": (EI, float), "PI": (PI, float), "SMC": (SMC, int)}
    if name not in table:
        raise ValueError(f"unknown acquisition {text!r}")
    cls, conv = table[name]
    return cls(conv(arg)) if arg else cls()


def kind_label(kind):
    if isinstance(kind, UCB):
        return f"UCB:{kind.kappa!r}"
    if isinstance(kind, (EI, PI)):
        return f"{kind.name}:{kind.xi!r}"
    return f"SMC:{kind.n_draws}"


def score_array(kind, mu, var, incumbent, rng=None, draws=None):
    """Vectorized acquisition score.

    For :class:`SMC`, ``draws`` (shape ``(n_draws, m)``) may carry joint
    posterior samples; otherwise independent normal draws from ``rng`` are
    used.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    if isinstance(kind, UCB):
        return mu + kind.kappa * sigma
    if isinstance(kind, SMC):
        if draws is not None:
            return np.mean(np.atleast_2d(draws), axis=0)
        rng = np.random.default_rng(rng)
        z = rng.standard_normal((kind.n_draws,) + mu.shape)
        return mu + sigma * np.mean(z, axis=0)
    improve = mu - incumbent - kind.xi
    pos = sigma > 0
    z = np.divide(improve, sigma, out=np.zeros_like(improve), where=pos)
    if isinstance(kind, PI):
        return np.where(pos, norm.cdf(z), (improve > 0).astype(float))
    if isinstance(kind, EI):
        with np.errstate(over="ignore"):
            ei = improve * norm.cdf(z) + sigma * norm.pdf(z)
        return np.where(pos, np.maximum(ei, 0.0), np.maximum(improve, 0.0))
    raise TypeError(f"unknown acquisition {kind!r}")


def score(kind, mu, var, incumbent, seed=None) -> float:
    """Scalar acquisition score of a posterior ``N(mu, var)``."""
    return float(score_array(kind, np.array([mu]), np.array([var]), incumbent, rng=seed)[0])


@dataclass(frozen=True)
class GAConfig:
    population: int = 64
    generations: int = 60
    crossover_rate: float = 0.9
    mutation_scale: float = 0.1
    elitism: int = 2
    seed: int = 0
    mutation_rate: float | None = None
    # best observed designs injected into the initial population
    n_seeded: int = 0

    def __post_init__(self):
        if not (0 <= self.crossover_rate <= 1):
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.mutation_rate is not None and not (0 <= self.mutation_rate <= 1):
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.population < 2 or self.generations < 0 or self.elitism < 0:
            raise ValueError("invalid GA sizes")
        if self.elitism >= self.population:
            raise ValueError("elitism must be smaller than the population")


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("bounds must have equal, nonzero length")
        if not all(np.isfinite(a) and np.isfinite(b) and a < b for a, b in zip(lo, hi)):
            raise ValueError("bounds must be finite with lower < upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def dbm(cls, n_tube=5):
        """The morph-weight box: every weight in [-0.5, 1.0]."""
        return cls((-0.5,) * (n_tube + 1), (1.0,) * (n_tube + 1))

    @classmethod
    def from_benchmark(cls, fn, inset=1e-9):
        lo, hi = fn.bounds
        return cls(tuple(lo + inset), tuple(hi - inset))

    @property
    def dim(self):
        return len(self.lower)

    @property
    def lo(self):
        return np.asarray(self.lower)

    @property
    def hi(self):
        return np.asarray(self.upper)

    def to_unit(self, X):
        return (np.asarray(X, dtype=float) - self.lo) / (self.hi - self.lo)

    def from_unit(self, U):
        return self.lo + np.asarray(U, dtype=float) * (self.hi - self.lo)

    def contains(self, X):
        X = np.atleast_2d(X)
        return bool(np.all((X >= self.lo) & (X <= self.hi)))

    def sample(self, rng, n):
        return self.from_unit(rng.random((n, self.dim)))

    def latin_hypercube(self, rng, n):
        U = (rng.permuted(np.tile(np.arange(n), (self.dim, 1)), axis=1).T + rng.random((n, self.dim))) / n
        return self.from_unit(U)


def _standardized(g, mu, var):
    return (mu - g.y_mean) / g.y_std, var / g.y_std**2


class _GA:
    """One real-coded GA population living in the unit box."""

    def __init__(self, kind, cfg, dim, rng, seeds_unit):
        self.kind = kind
        self.cfg = cfg
        self.dim = dim
        self.rng = rng
        P = rng.random((cfg.population, dim))
        if len(seeds_unit):
            m = min(len(seeds_unit), cfg.n_seeded, cfg.population)
            P[:m] = seeds_unit[:m]
        self.pop = P
        self.fit = None

    def evaluate(self, scores):
        self.fit = scores

    def step(self, progress):
        cfg, rng, P, f = self.cfg, self.rng, self.pop, self.fit
        n, d = P.shape
        order = np.argsort(-f, kind="stable")
        elite = P[order[: cfg.elitism]]
        n_child = n - cfg.elitism
        # binary tournaments
        a = rng.integers(0, n, (n_child, 2))
        b = rng.integers(0, n, (n_child, 2))
        pa = np.where(f[a[:, 0]] >= f[a[:, 1]], a[:, 0], a[:, 1])
        pb = np.where(f[b[:, 0]] >= f[b[:, 1]], b[:, 0], b[:, 1])
        A, B = P[pa], P[pb]
        # blend crossover (BLX-0.25)
        do_x = rng.random(n_child) < cfg.crossover_rate
        lam = rng.uniform(-0.25, 1.25, (n_child, d))
        C = np.where(do_x[:, None], A + lam * (B - A), A)
        # gaussian mutation, annealed towards 10% of the initial scale
        rate = cfg.mutation_rate if cfg.mutation_rate is not None else 1.0 / d
        scale = cfg.mutation_scale * (1.0 - 0.9 * progress)
        mask = rng.random((n_child, d)) < rate
        C = C + mask * rng.normal(0.0, scale, (n_child, d))
        C = np.clip(C, 0.0, 1.0)
        self.pop = np.vstack([elite, C])


def _batched_scores(kinds, gas, g, space, incumbent_s, rngs):
    """Score every GA population with one posterior evaluation."""
    U = np.vstack([ga.pop for ga in gas])
    mu, var = g.predict(space.from_unit(U))
    mu_s, var_s = _standardized(g, mu, var)
    out = []
    start = 0
    for kind, ga, rng in zip(kinds, gas, rngs):
        sl = slice(start, start + ga.pop.shape[0])
        start = sl.stop
        if isinstance(kind, SMC):
            draws = sample_posterior(g, space.from_unit(ga.pop), seed=rng, n_samples=kind.n_draws)
            out.append(score_array(kind, mu_s[sl], var_s[sl], incumbent_s,
                                   draws=(draws - g.y_mean) / g.y_std))
        else:
            out.append(score_array(kind, mu_s[sl], var_s[sl], incumbent_s))
    return out


def _select_distinct(pop, scores, q, tol):
    order = np.argsort(-scores, kind="stable")
    chosen = []
    for i in order:
        if all(np.linalg.norm(pop[i] - pop[j]) >= tol for j in chosen):
            chosen.append(i)
        if len(chosen) == q:
            break
    if len(chosen) < q:
        taken = set(chosen)
        chosen += [i for i in order if i not in taken][: q - len(chosen)]
        rank = {int(i): r for r, i in enumerate(order)}
        chosen.sort(key=lambda i: rank[int(i)])
    return chosen


def propose_many(kinds, g: GaussianSurrogate, space: SearchSpace, q, cfg: GAConfig, seeds,
                 incumbent=None, tol=1e-3):
    """Run one GA per acquisition function in lockstep.

    Returns a list (one entry per kind) of ``(q, d)`` arrays in the original
    coordinates, best first.
    """
    if q < 1:
        raise ValueError("q must be at least 1")
    kinds = list(kinds)
    rngs = [np.random.default_rng(s) for s in seeds]
    if len(rngs) != len(kinds):
        raise ValueError("need one seed per acquisition function")
    X_unit = space.to_unit(g.X if g.lower is None else g.lower + g.X * (g.upper - g.lower))
    top = np.argsort(-g.y, kind="stable")
    seeds_unit = np.clip(X_unit[top], 0.0, 1.0)
    if incumbent is None:
        incumbent = float(np.max(g.y))
    incumbent_s = (incumbent - g.y_mean) / g.y_std
    gas = [_GA(k, cfg, space.dim, rng, seeds_unit) for k, rng in zip(kinds, rngs)]
    G = cfg.generations
    for gen in range(G + 1):
        for ga, s in zip(gas, _batched_scores(kinds, gas, g, space, incumbent_s, rngs)):
            ga.evaluate(s)
        if gen < G:
            for ga in gas:
                ga.step(gen / max(G - 1, 1))
    out = []
    for ga in gas:
        idx = _select_distinct(ga.pop, ga.fit, q, tol)
        out.append(space.from_unit(ga.pop[idx]))
    return out


def propose(kind, g: GaussianSurrogate, space: SearchSpace, q, cfg: GAConfig | None = None,
            incumbent=None, tol=1e-3):
    """``q`` best-scoring distinct designs for a single acquisition function."""
    cfg = cfg or GAConfig()
    return propose_many([kind], g, space, q, cfg, [cfg.seed], incumbent, tol)[0]


def mutate_batch(points, space: SearchSpace, beta, tol=1e-3, seed=None):
    """Resample near-duplicate batch members uniformly with probability ``beta``.

    Distances are measured in the unit box of ``space``. Points are visited
    in order, so of a coincident pair only the first can be replaced.
    """
    if not (0.0 <= beta <= 1.0):
        raise ValueError("beta must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    P = np.array(points, dtype=float)
    U = space.to_unit(P)
    for i in range(len(U)):
        others = np.delete(U, i, axis=0)
        if len(others) == 0:
            break
        if np.min(np.linalg.norm(others - U[i], axis=1)) < tol and rng.random() < beta:
            U[i] = rng.random(space.dim)
            P[i] = space.from_unit(U[i])
    return [p for p in P]
