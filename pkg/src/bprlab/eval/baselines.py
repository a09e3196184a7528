"""Non-BPR reference models: ItemPop and EASE."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ..data import InteractionLog
from ..errors import ConfigError, EmptyDataset, NumericsError

logger = logging.getLogger(__name__)

EASE_MAX_ITEMS = 40_000


@dataclass
class ItemPopModel:
    popularity: np.ndarray

    def scores(self, users, fold_in=None) -> np.ndarray:
        return np.tile(self.popularity.astype(np.float64), (len(users), 1))

    def ranking(self) -> np.ndarray:
        return np.argsort(-self.popularity, kind="stable")


def fit_itempop(train: InteractionLog) -> ItemPopModel:
    if len(train) == 0:
        raise EmptyDataset("ItemPop needs a non-empty training log")
    return ItemPopModel(train.item_counts())


@dataclass
class EaseModel:
    B: np.ndarray
    l2: float

    def scores(self, users, fold_in) -> np.ndarray:
        """``fold_in`` is the binary user x item matrix of the scored users."""
        X = fold_in if sp.issparse(fold_in) else np.asarray(fold_in)
        return np.asarray(X @ self.B)


def fit_ease(train: InteractionLog | sp.spmatrix, l2: float, max_items: int = EASE_MAX_ITEMS) -> EaseModel:
    """Closed-form item-item ridge model with a zero self-similarity diagonal.

    ``B = I - P diag(1 / diag(P))`` with ``P = (X'X + l2 I)^-1``.
    """
    if not l2 > 0:
        raise ConfigError(f"EASE l2 must be > 0, got {l2}")
    X = train.to_csr() if isinstance(train, InteractionLog) else sp.csr_matrix(train)
    n = X.shape[1]
    if n > max_items:
        raise ConfigError(f"EASE needs a dense {n} x {n} system; cap is {max_items} items")
    logger.info("EASE: allocating %.1f MiB for a %d x %d Gram matrix", 2 * n * n * 8 / 2**20, n, n)
    G = np.asarray((X.T @ X).todense(), dtype=np.float64)
    G[np.diag_indices(n)] += l2
    try:
        factor = scipy.linalg.cho_factor(G, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"EASE Gram matrix is not positive definite: {exc}") from exc
    P = scipy.linalg.cho_solve(factor, np.eye(n))
    B = -P / np.diag(P)[None, :]
    B[np.diag_indices(n)] = 0.0
    return EaseModel(B, float(l2))
