"""Hedging over an acquisition portfolio.

Every epoch each acquisition function nominates ``Q`` points. Past nominees
are rewarded with the current surrogate's posterior mean, rewards are
min-max normalized over all functions and summed per function, and a
softmax over the sums picks which function fills each batch slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gp import GaussianSurrogate


@dataclass(frozen=True, eq=False)
class HedgeState:
    """Nominee history and reward matrix.

    ``history[j]`` has shape ``(L, Q, D)`` for epoch ``j + 1``;
    ``rewards`` has shape ``(len(history), L, Q)``.
    """

    eta: float = 1.0
    history: tuple = ()
    rewards: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        hist = tuple(np.asarray(h, dtype=float) for h in self.history)
        if hist and any(h.shape != hist[0].shape for h in hist):
            raise ValueError("nominee history must have consistent (L, Q, D) shape")
        object.__setattr__(self, "history", hist)
        if self.rewards is not None:
            r = np.asarray(self.rewards, dtype=float)
            if hist and r.shape != (len(hist),) + hist[0].shape[:2]:
                raise ValueError("rewards shape does not match the history")
            if not np.all(np.isfinite(r)):
                raise ValueError("rewards must be finite")
            object.__setattr__(self, "rewards", r)

    def record(self, nominees):
        """New state with this epoch's ``(L, Q, D)`` nominees appended."""
        return HedgeState(self.eta, self.history + (np.asarray(nominees, dtype=float),), None)


def compute_rewards(g: GaussianSurrogate, state: HedgeState) -> HedgeState:
    """Reward every past nominee with the posterior mean of ``g``."""
    if not state.history:
        return HedgeState(state.eta, (), np.zeros((0, 0, 0)))
    H = np.stack(state.history)
    n, L, Q, D = H.shape
    mu = g.predict(H.reshape(-1, D), return_var=False)
    return HedgeState(state.eta, state.history, mu.reshape(n, L, Q))


def normalize_rewards(state_or_rewards, n_functions=None):
    """Per-function sums of min-max normalized rewards.

    Accepts a :class:`HedgeState` or a reward array of shape ``(n, L, Q)``.
    All-equal rewards give zero for every function.
    """
    if isinstance(state_or_rewards, HedgeState):
        G = state_or_rewards.rewards
        if G is None:
            raise ValueError("rewards not computed; call compute_rewards first")
    else:
        G = np.asarray(state_or_rewards, dtype=float)
    if G.size == 0:
        L = n_functions if n_functions is not None else (G.shape[1] if G.ndim == 3 else 0)
        return np.zeros(L)
    lo, hi = float(np.min(G)), float(np.max(G))
    if hi == lo:
        return np.zeros(G.shape[1])
    return np.sum((G - lo) / (hi - lo), axis=(0, 2))


def selection_probabilities(phi, eta):
    """Softmax ``exp(eta phi_l) / sum_i exp(eta phi_i)``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    z = eta * np.asarray(phi, dtype=float)
    z = z - np.max(z)
    e = np.exp(z)
    return e / np.sum(e)


def select_batch(nominees, phi, eta, q, seed=None):
    """Fill ``q`` slots, slot ``i`` taking the ``i``-th nominee of a sampled function.

    Returns
    -------
    batch : list of (ndarray, int)
        Selected vector and the index of its source function.
    p : ndarray
        Selection probabilities.
    """
    N = np.asarray(nominees, dtype=float)
    L, Q = N.shape[:2]
    if q > Q:
        raise ValueError(f"asked for {q} slots but only {Q} nominees per function")
    p = selection_probabilities(phi, eta)
    if p.size != L:
        raise ValueError("one reward sum per acquisition function required")
    rng = np.random.default_rng(seed)
    sources = rng.choice(L, size=q, p=p)
    return [(N[l, i].copy(), int(l)) for i, l in enumerate(sources)], p
