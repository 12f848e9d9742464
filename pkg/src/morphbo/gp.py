"""Noisy Gaussian-process surrogate with an anisotropic squared-exponential kernel.

Hyper-parameters are fitted by maximizing the log marginal likelihood with a
multi-start bounded L-BFGS search in log space. Targets are standardized to
zero mean and unit variance before fitting; posterior queries are reported in
the original target units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, lapack, solve_triangular
from scipy.optimize import minimize

from . import kernels
from .errors import DegenerateData, DimensionMismatch

log = logging.getLogger(__name__)

LOG_H_BOUNDS = (np.log(0.01), np.log(10.0))
LOG_EPS_BOUNDS = (-3.0, 3.0)
LOG_SIGMA_BOUNDS = (-8.0, 0.0)
SIGMA_FLOOR = float(np.exp(LOG_SIGMA_BOUNDS[0]))
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class KernelParams:
    """Kernel hyper-parameters.

    Attributes
    ----------
    h : tuple of float
        Per-dimension covariance lengths; the metric is ``diag(h)**-2``.
    eps_f : float
        Signal amplitude; the prior variance is ``eps_f**2``.
    sigma_n : float
        Observation noise standard deviation.
    """

    h: tuple
    eps_f: float
    sigma_n: float

    def __post_init__(self):
        h = tuple(float(v) for v in np.atleast_1d(self.h))
        object.__setattr__(self, "h", h)
        if not all(np.isfinite(v) and v > 0 for v in h):
            raise ValueError(f"covariance lengths must be finite and positive, got {h}")
        if not self.eps_f > 0:
            raise ValueError(f"eps_f must be positive, got {self.eps_f}")
        if not self.sigma_n >= 0:
            raise ValueError(f"sigma_n must be nonnegative, got {self.sigma_n}")

    @property
    def dim(self):
        return len(self.h)

    @property
    def inv_h(self):
        return 1.0 / np.asarray(self.h)

    def to_theta(self):
        """Log-space vector ``(log h_1..log h_D, log eps_f, log sigma_n)``."""
        return np.concatenate([np.log(self.h), [np.log(self.eps_f), np.log(max(self.sigma_n, 1e-300))]])

    @classmethod
    def from_theta(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(tuple(np.exp(theta[:-2])), float(np.exp(theta[-2])), float(np.exp(theta[-1])))


def kernel(w, w2, params: KernelParams) -> float:
    """Covariance between two design vectors."""
    w = np.asarray(w, dtype=float).ravel()
    w2 = np.asarray(w2, dtype=float).ravel()
    if w.shape != w2.shape or w.size != params.dim:
        raise DimensionMismatch(f"vectors of length {w.size} and {w2.size} for a {params.dim}-D kernel")
    t = (w - w2) * params.inv_h
    return params.eps_f**2 * float(np.exp(-0.5 * np.dot(t, t)))


def _factor(K):
    """Cholesky factor of ``K`` with the jitter ladder; returns ``(L, jitter)``."""
    n = K.shape[0]
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    for jitter in JITTER_LADDER:
        try:
            if jitter:
                L = cholesky(K + jitter * scale * np.eye(n), lower=True, check_finite=False)
            else:
                L = cholesky(K, lower=True, check_finite=False)
            return L, jitter
        except LinAlgError:
            continue
    raise LinAlgError("covariance matrix not positive definite after jitter escalation")


@dataclass(frozen=True, eq=False)
class GaussianSurrogate:
    """Fitted GP posterior state.

    Training inputs are stored in the unit box when ``lower``/``upper`` are
    given; queries are scaled the same way.
    """

    X: np.ndarray
    y: np.ndarray
    params: KernelParams
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    y_mean: float = 0.0
    y_std: float = 1.0
    degenerate: bool = False
    jitter: float = 0.0
    log_likelihood: float = float("nan")
    _L: np.ndarray = field(default=None, repr=False)
    _alpha: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_params(cls, X, y, params, lower=None, upper=None, standardize=False, degenerate=False):
        """Condition a GP with fixed hyper-parameters on data.

        With ``standardize=False`` the parameters are in target units and the
        prior mean is zero. With ``standardize=True`` they apply to the
        standardized targets.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise DimensionMismatch(f"{X.shape[0]} inputs but {y.size} targets")
        if X.shape[1] != params.dim:
            raise DimensionMismatch(f"{X.shape[1]}-D inputs for a {params.dim}-D kernel")
        if lower is not None:
            lower = np.asarray(lower, dtype=float)
            upper = np.asarray(upper, dtype=float)
        Xu = _to_unit(X, lower, upper)
        y_mean, y_std = 0.0, 1.0
        if standardize:
            y_mean = float(np.mean(y))
            y_std = float(np.std(y))
            if y_std == 0.0:
                y_std = 1.0
        ys = (y - y_mean) / y_std
        K = kernels.se_cross(Xu, Xu, params.inv_h, params.eps_f**2)
        K[np.diag_indices_from(K)] += params.sigma_n**2
        L, jitter = _factor(K)
        if jitter:
            log.info("GP factorization needed jitter %.1e", jitter)
        alpha = cho_solve((L, True), ys, check_finite=False)
        ll = -0.5 * ys @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * ys.size * np.log(2 * np.pi)
        return cls(Xu, y, params, lower, upper, y_mean, y_std, degenerate, jitter, float(ll), L, alpha)

    @property
    def n(self):
        return self.y.size

    @property
    def dim(self):
        return self.params.dim

    def scale(self, W):
        return _to_unit(np.atleast_2d(np.asarray(W, dtype=float)), self.lower, self.upper)

    def predict(self, W, return_var=True, unit=False):
        """Posterior mean and variance at many points (original target units).

        Parameters
        ----------
        W : array-like, shape (m, d)
        return_var : bool
        unit : bool
            If True, ``W`` is already in the unit box.
        """
        Wu = np.atleast_2d(np.asarray(W, dtype=float)) if unit else self.scale(W)
        p = self.params
        Ks = kernels.se_cross(Wu, self.X, p.inv_h, p.eps_f**2)
        mu = self.y_mean + self.y_std * (Ks @ self._alpha)
        if not return_var:
            return mu
        V = solve_triangular(self._L, Ks.T, lower=True, check_finite=False)
        var = p.eps_f**2 - np.einsum("ij,ij->j", V, V)
        if np.any(var < 0):
            log.debug("clamped %d negative posterior variances", int(np.sum(var < 0)))
            var = np.maximum(var, 0.0)
        return mu, var * self.y_std**2

    def predict_cov(self, W, unit=False):
        """Posterior mean vector and latent covariance matrix."""
        Wu = np.atleast_2d(np.asarray(W, dtype=float)) if unit else self.scale(W)
        p = self.params
        Ks = kernels.se_cross(Wu, self.X, p.inv_h, p.eps_f**2)
        mu = self.y_mean + self.y_std * (Ks @ self._alpha)
        V = solve_triangular(self._L, Ks.T, lower=True, check_finite=False)
        C = kernels.se_cross(Wu, Wu, p.inv_h, p.eps_f**2) - V.T @ V
        return mu, 0.5 * (C + C.T) * self.y_std**2


def _to_unit(X, lower, upper):
    if lower is None:
        return np.array(X, dtype=float)
    return (X - lower) / (upper - lower)


def posterior(g: GaussianSurrogate, w):
    """Posterior ``(mean, variance)`` at one design vector."""
    mu, var = g.predict(np.asarray(w, dtype=float).reshape(1, -1))
    return float(mu[0]), float(var[0])


def sample_posterior(g: GaussianSurrogate, points, seed=None, n_samples=None, unit=False):
    """Joint draw(s) of the latent function at ``points``.

    Exactly repeated points receive exactly repeated values. Returns a list
    of floats for a single draw, or an ``(n_samples, m)`` array otherwise.
    """
    rng = np.random.default_rng(seed)
    P = np.atleast_2d(np.asarray(points, dtype=float))
    uniq, inverse = np.unique(P, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    mu, C = g.predict_cov(uniq, unit=unit)
    A = _sqrt_psd(C)
    k = 1 if n_samples is None else int(n_samples)
    Z = rng.standard_normal((k, uniq.shape[0]))
    draws = mu[None, :] + Z @ A.T
    draws = draws[:, inverse]
    if n_samples is None:
        return [float(v) for v in draws[0]]
    return draws


def _sqrt_psd(C):
    """A matrix ``A`` with ``A @ A.T ~= C`` for a PSD ``C``."""
    scale = max(float(np.max(np.abs(np.diag(C)))), 1e-300)
    n = C.shape[0]
    for jitter in JITTER_LADDER[1:]:
        try:
            return cholesky(C + jitter * scale * np.eye(n), lower=True, check_finite=False)
        except LinAlgError:
            continue
    vals, vecs = np.linalg.eigh(C)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


class _LogMarginal:
    """Negative log marginal likelihood and gradient in log-hyper-parameter space."""

    def __init__(self, Xu, ys):
        self.ys = ys
        self.n = ys.size
        self.diffs = kernels.sq_diffs(Xu)
        self.eye = np.eye(self.n)

    def __call__(self, theta):
        D = self.diffs.shape[0]
        inv_h2 = np.exp(-2.0 * theta[:D])
        amp2 = np.exp(2.0 * theta[D])
        sig2 = np.exp(2.0 * theta[D + 1])
        Kf = kernels.se_gram_from_diffs(self.diffs, inv_h2, amp2)
        K = Kf + sig2 * self.eye
        try:
            L = cholesky(K, lower=True, check_finite=False)
        except LinAlgError:
            return 1e25, np.zeros_like(theta)
        alpha = cho_solve((L, True), self.ys, check_finite=False)
        nll = 0.5 * self.ys @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * self.n * np.log(2 * np.pi)
        # lower triangle of K^-1; the strict upper triangle stays zero
        Kl, info = lapack.dpotri(L, lower=1)
        if info != 0:
            return 1e25, np.zeros_like(theta)
        # sum(S * K^-1) for symmetric S is 2*sum(S * Kl) - sum(diag(S) * diag(Kl))
        tr_inv = float(np.trace(Kl))
        AK = np.outer(alpha, alpha)
        AK *= Kf
        Kl *= Kf
        dflat = self.diffs.reshape(D, -1)
        grad = np.empty_like(theta)
        # diffs have a zero diagonal, so no diagonal correction is needed there
        grad[:D] = -0.5 * (dflat @ AK.ravel() - 2.0 * (dflat @ Kl.ravel())) * inv_h2
        grad[D] = -(np.sum(AK) - 2.0 * np.sum(Kl) + amp2 * tr_inv)
        grad[D + 1] = -sig2 * (alpha @ alpha - tr_inv)
        return float(nll), grad

    def value(self, theta):
        """Negative log marginal likelihood only (no gradient)."""
        D = self.diffs.shape[0]
        Kf = kernels.se_gram_from_diffs(self.diffs, np.exp(-2.0 * theta[:D]), np.exp(2.0 * theta[D]))
        Kf[np.diag_indices_from(Kf)] += np.exp(2.0 * theta[D + 1])
        try:
            L = cholesky(Kf, lower=True, check_finite=False)
        except LinAlgError:
            return 1e25
        alpha = cho_solve((L, True), self.ys, check_finite=False)
        return float(0.5 * self.ys @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * self.n * np.log(2 * np.pi))


def log_marginal_likelihood(X, y, params: KernelParams, lower=None, upper=None, standardize=True):
    """Log marginal likelihood of ``params`` on the (standardized) data."""
    return GaussianSurrogate.from_params(X, y, params, lower, upper, standardize=standardize).log_likelihood


def _bounds(dim):
    return [LOG_H_BOUNDS] * dim + [LOG_EPS_BOUNDS, LOG_SIGMA_BOUNDS]


def fit(X, y, lower=None, upper=None, n_starts=8, seed=0, warm_start=None, n_polish=None, maxiter=200):
    """Fit hyper-parameters by maximizing the log marginal likelihood.

    Parameters
    ----------
    X : array-like, shape (n, d)
        Design vectors, in original units when ``lower``/``upper`` are given.
    y : array-like, shape (n,)
    lower, upper : array-like, optional
        Box used to scale inputs to the unit cube.
    n_starts : int
        Number of starting points (the first is ``warm_start`` if given).
    seed : int
        Seed for the random starting points.
    warm_start : KernelParams, optional
    n_polish : int, optional
        If set, all starts are ranked by likelihood and only the best
        ``n_polish`` are refined by L-BFGS. ``None`` refines every start;
        ``0`` keeps the best start unrefined.
    maxiter : int
        L-BFGS iteration cap per start.

    Returns
    -------
    GaussianSurrogate
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise DimensionMismatch(f"{X.shape[0]} inputs but {y.size} targets")
    if y.size < 2:
        raise ValueError("need at least 2 observations to fit a surrogate")
    dim = X.shape[1]
    if lower is not None:
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
    y_std = float(np.std(y))
    if y_std == 0.0 or not np.isfinite(y_std):
        log.warning("all %d targets identical; using a constant-mean surrogate", y.size)
        params = KernelParams((1.0,) * dim, 1.0, SIGMA_FLOOR)
        g = GaussianSurrogate.from_params(X, y, params, lower, upper, standardize=True, degenerate=True)
        return g

    Xu = _to_unit(X, lower, upper)
    ys = (y - np.mean(y)) / y_std
    objective = _LogMarginal(Xu, ys)
    bounds = _bounds(dim)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    rng = np.random.default_rng(seed)
    starts = []
    if warm_start is not None:
        starts.append(np.clip(warm_start.to_theta(), lo, hi))
    else:
        starts.append(np.concatenate([np.full(dim, np.log(0.3)), [0.0, -4.0]]))
    while len(starts) < n_starts:
        starts.append(rng.uniform(lo, hi))

    best_theta, best_val = starts[0], np.inf
    if n_polish is not None and n_polish < len(starts):
        if n_polish < 0:
            raise ValueError("n_polish must be >= 0")
        scores = [objective.value(s) for s in starts]
        order = np.argsort(scores, kind="stable")
        # with no polishing the best screened start is used as is
        best_theta = starts[order[0]]
        starts = [starts[i] for i in order[:n_polish]]

    for s in starts:
        res = minimize(objective, s, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": maxiter})
        theta = np.clip(res.x, lo, hi)
        val = float(res.fun)
        if val < best_val:
            best_theta, best_val = theta, val
    params = KernelParams.from_theta(best_theta)
    return GaussianSurrogate.from_params(X, y, params, lower, upper, standardize=True)
