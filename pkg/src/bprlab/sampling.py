"""Training-triple samplers: uniform positives, uniform or adaptive negatives.

The adaptive sampler is the rank-based scheme for factor models: pick a
latent factor with probability proportional to ``|p_uf| * std_f``, draw a rank
from a truncated exponential law, and return the item at that rank of the
factor's item ordering (reversed when ``p_uf < 0``).  Orderings and factor
standard deviations are recomputed on a schedule by
:func:`refresh_adaptive_state`.

These functions take a ``numpy.random.Generator`` and are the reference
implementation; the training loop uses the compiled equivalents in
:mod:`bprlab._kernel`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import UserHistoryIndex
from .errors import NoNegativeAvailable
from .model import ModelParams


@dataclass
class AdaptiveSamplerState:
    orderings: np.ndarray
    factor_std: np.ndarray
    rank_temperature: float
    refresh_interval: int
    retry_cap: int = 50
    refreshed: int = 0

    @classmethod
    def empty(cls, item_count: int, f: int, rank_temperature: float | None = None,
              refresh_interval: int = 0, retry_cap: int = 50) -> "AdaptiveSamplerState":
        if rank_temperature is None:
            rank_temperature = item_count / 100.0
        return cls(
            orderings=np.tile(np.arange(item_count, dtype=np.int64), (f, 1)),
            factor_std=np.zeros(f),
            rank_temperature=float(rank_temperature),
            refresh_interval=int(refresh_interval),
            retry_cap=int(retry_cap),
        )


def sample_positive(history: UserHistoryIndex, rng: np.random.Generator) -> tuple[int, int]:
    k = int(rng.integers(history.n_events))
    return int(history.event_users[k]), int(history.event_items[k])


def sample_negative_uniform(u: int, history: UserHistoryIndex, rng: np.random.Generator) -> int:
    n_items = history.item_count
    if history.degree(u) >= n_items:
        raise NoNegativeAvailable(f"user {u} has interacted with all {n_items} items")
    while True:
        j = int(rng.integers(n_items))
        if not history.contains(u, j):
            return j


def refresh_adaptive_state(params: ModelParams, state: AdaptiveSamplerState) -> None:
    Q = params.Q
    state.orderings = np.argsort(-Q, axis=0, kind="stable").T.astype(np.int64).copy()
    state.factor_std = Q.std(axis=0).astype(np.float64)
    state.refreshed += 1


def sample_rank(n: int, temperature: float, rng: np.random.Generator) -> int:
    """Rank in ``[0, n)`` with ``P(r) proportional to exp(-r / temperature)``."""
    return _rank_from_uniform(n, temperature, float(rng.random()))


def _rank_from_uniform(n: int, temperature: float, x: float) -> int:
    if temperature <= 0.0:
        return 0
    mass = -math.expm1(-n / temperature)
    r = int(math.floor(-temperature * math.log1p(-x * mass)))
    return min(max(r, 0), n - 1)


def rank_probabilities(n: int, temperature: float) -> np.ndarray:
    r = np.arange(n)
    w = np.exp(-r / temperature)
    return w / w.sum()


def sample_negative_adaptive(u: int, params: ModelParams, state: AdaptiveSamplerState,
                             history: UserHistoryIndex, rng: np.random.Generator) -> int:
    p = params.P[u]
    weights = np.abs(p) * state.factor_std
    total = float(weights.sum())
    if total > 0.0:
        cum = np.cumsum(weights)
        n_items = params.item_count
        for _ in range(state.retry_cap):
            f = int(np.searchsorted(cum, rng.random() * total, side="right"))
            f = min(f, len(cum) - 1)
            r = sample_rank(n_items, state.rank_temperature, rng)
            pos = r if p[f] > 0 else n_items - 1 - r
            j = int(state.orderings[f, pos])
            if not history.contains(u, j):
                return j
    return sample_negative_uniform(u, history, rng)
