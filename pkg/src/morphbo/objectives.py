"""Objective functions: benchmark suite, pressure recovery, and a shape proxy.

All objectives are maximized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import BaselineSet, hub_area_on_tube, morph_design, validate_design
from .errors import OutOfBounds, ZeroWeightSum
from .morph import MorphWeights, OriginCurve, RadialMatrix

BENCHMARKS = ("spherical", "rastrigin", "styblinski-tang", "amalgamated")

# per-branch domains of the amalgamated function, k = (i - 1) mod 7
_AMALGAM_BOUNDS = (
    (0.0, np.pi),
    (-5.0, 5.0),
    (-10.0, 10.0),
    (-5.12, 5.12),
    (-2.0, 2.0),
    (-0.5 * np.pi, 0.5 * np.pi),
    (-30.0, 30.0),
)
_UNIFORM_BOUNDS = {
    "spherical": (-10.0, 10.0),
    "rastrigin": (-5.12, 5.12),
    "styblinski-tang": (-5.0, 5.0),
}


def _st_root():
    # stationary points of w^4 - 16 w^2 + 5 w
    roots = np.roots([4.0, 0.0, -32.0, 5.0]).real
    return float(min(roots))


ST_ARGMAX = _st_root()
ST_MAX = float(-(ST_ARGMAX**4 - 16 * ST_ARGMAX**2 + 5 * ST_ARGMAX) / 2)


@dataclass(frozen=True)
class BenchmarkFn:
    name: str
    dim: int = 6

    def __post_init__(self):
        key = self.name.lower().replace("_", "-")
        if key == "styblinskitang":
            key = "styblinski-tang"
        if key not in BENCHMARKS:
            raise ValueError(f"unknown benchmark {self.name!r}; choose from {BENCHMARKS}")
        object.__setattr__(self, "name", key)
        if self.dim < 1:
            raise ValueError("dimension must be positive")

    @property
    def bounds(self):
        """``(lower, upper)`` arrays, closed versions of the open domains."""
        if self.name == "amalgamated":
            b = np.array([_AMALGAM_BOUNDS[i % 7] for i in range(self.dim)])
        else:
            b = np.tile(_UNIFORM_BOUNDS[self.name], (self.dim, 1))
        return b[:, 0].copy(), b[:, 1].copy()

    def __call__(self, w):
        return eval_benchmark(self, w)


def _amalgam_terms(W):
    """Per-dimension contributions ``-g(w_i)``, shape (n, D)."""
    n, D = W.shape
    out = np.empty_like(W)
    for i in range(D):
        x = W[:, i]
        k = i % 7
        if k == 0:
            out[:, i] = np.sin(x)
        elif k == 1:
            out[:, i] = -(x**4 - 16 * x**2 + 5 * x) / 2
        elif k == 2:
            out[:, i] = -x**2
        elif k == 3:
            out[:, i] = -(10 + x**2 - 10 * np.cos(2 * np.pi * x))
        elif k == 4:
            # w_0 is taken as 0 when no predecessor exists
            prev = W[:, i - 1] if i > 0 else np.zeros(n)
            out[:, i] = -(100 * (x - prev**2) ** 2 + (1 - x) ** 2)
        elif k == 5:
            out[:, i] = np.abs(np.cos(x))
        else:
            out[:, i] = -x
    return out


def eval_benchmark_batch(fn: BenchmarkFn, W, check=True):
    """Vectorized benchmark evaluation over rows of ``W``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[1] != fn.dim:
        raise ValueError(f"expected {fn.dim}-D input, got {W.shape[1]}")
    if check:
        lo, hi = fn.bounds
        if np.any(W < lo) or np.any(W > hi):
            raise OutOfBounds(f"input outside the {fn.name} domain")
    if fn.name == "spherical":
        return -np.sum(W**2, axis=1)
    if fn.name == "rastrigin":
        return -np.sum(10 + W**2 - 10 * np.cos(2 * np.pi * W), axis=1)
    if fn.name == "styblinski-tang":
        return -np.sum(W**4 - 16 * W**2 + 5 * W, axis=1) / 2
    return np.sum(_amalgam_terms(W), axis=1)


def eval_benchmark(fn: BenchmarkFn, w) -> float:
    return float(eval_benchmark_batch(fn, np.asarray(w, dtype=float).reshape(1, -1))[0])


def _rastrigin_rosenbrock_pair():
    """Maximizer of ``-rastrigin(a) - rosenbrock(a, b)`` over the pair domain.

    At ``a = 0`` the best ``b`` is ``1/101``; the competing basins near
    ``a = +-1`` are strictly worse (checked by brute force in the tests).
    """
    b = 1.0 / 101.0
    return 0.0, b, -(100 * b**2 + (1 - b) ** 2)


def benchmark_optimum(fn: BenchmarkFn):
    """Global maximizer and maximum of a benchmark."""
    D = fn.dim
    if fn.name in ("spherical", "rastrigin"):
        return np.zeros(D), 0.0
    if fn.name == "styblinski-tang":
        return np.full(D, ST_ARGMAX), ST_MAX * D
    w = np.zeros(D)
    for i in range(D):
        k = i % 7
        if k == 0:
            w[i] = 0.5 * np.pi
        elif k == 1:
            w[i] = ST_ARGMAX
        elif k == 4:
            a, b, _ = _rastrigin_rosenbrock_pair()
            w[i - 1], w[i] = a, b
        elif k == 6:
            w[i] = _AMALGAM_BOUNDS[6][0]
    return w, eval_benchmark(fn, w)


@dataclass(frozen=True)
class HydroState:
    P0: float = 0.0
    P1: float = 0.0
    P2: float = 0.0
    rho: float = 1000.0
    v0: float = 1.0
    v1: float = 1.0
    A0: float = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("density must be positive")
        if not self.A0 > 0:
            raise ValueError("area must be positive")


def cprm(state: HydroState) -> float:
    """Dimensionless mean pressure recovery ``(P2 - P1) / (rho v1^2 / 2)``."""
    if not state.v1 > 0:
        raise ValueError("v1 must be positive")
    return (state.P2 - state.P1) / (0.5 * state.rho * state.v1**2)


def power_from_cprm(state: HydroState, c: float) -> float:
    """Available power ``A0 v0 (P0 - P2 + c rho v1^2 / 2)`` in watts."""
    return state.A0 * state.v0 * (state.P0 - state.P2 + c * 0.5 * state.rho * state.v1**2)


@dataclass(frozen=True)
class ProxyParams:
    lambda_sep: float = 1.0
    lambda_curv: float = 0.5
    # separation threshold, scaled by 1/D
    tau: float = 0.35


def proxy_from_shapes(tube: RadialMatrix, curve: OriginCurve, hub_area=None, diameter=1.0,
                      params: ProxyParams = ProxyParams()) -> float:
    """Diffuser-recovery proxy for an already validated tube.

    ``hub_area`` optionally gives the hub blockage at each tube plane.
    """
    A = tube.areas()
    if hub_area is not None:
        A = A - np.asarray(hub_area)
    s = tube.grid.arc_positions
    recovery = 1.0 - (A[0] / A[-1]) ** 2
    rel_growth = np.gradient(A, s) / A
    tau = params.tau / diameter
    separation = np.sum(np.maximum(0.0, rel_growth - tau) ** 2)
    bend = np.mean(tube.radii.max(axis=0) * curve.curvature)
    return float(recovery - params.lambda_sep * separation - params.lambda_curv * bend)


def shape_proxy_objective(w, baselines: BaselineSet, params: ProxyParams = ProxyParams(),
                          return_validity=False):
    """Proxy objective of a design; 0 for designs that cannot be built."""
    if not isinstance(w, MorphWeights):
        w = MorphWeights.from_vector(w, baselines.n_tube)
    try:
        tube, hub = morph_design(baselines, w)
    except ZeroWeightSum:
        return (0.0, False) if return_validity else 0.0
    report = validate_design(baselines, tube, hub)
    if not report.valid:
        return (0.0, False) if return_validity else 0.0
    value = proxy_from_shapes(tube, baselines.tube_curve, hub_area_on_tube(baselines, hub),
                              baselines.diameter, params)
    return (value, True) if return_validity else value
