"""Pairwise BPR loss, its exact per-triple gradient, and the pair indicator used by AUC.

Regularization is written ``lam * ||theta||^2`` with gradient ``2 * lam * theta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import ModelParams, score

REG_VARIANTS = ("none", "shared", "user_item", "separate")


@dataclass(frozen=True)
class RegScheme:
    """Which L2 penalties apply to ``p_u``, ``q_i``, ``q_j`` and the item biases.

    * ``none``: no penalty at all.
    * ``shared``: one ``lam`` for everything.
    * ``user_item``: ``lam_u`` for users, ``lam_i`` for both positive and negative items.
    * ``separate``: independent ``lam_u``, ``lam_i``, ``lam_j``.

    ``lam_b`` regularizes biases; when left as ``None`` it follows ``lam``
    (shared), ``lam_i`` (user_item, separate) or 0 (none).
    """

    variant: str = "separate"
    lam: float = 0.0
    lam_u: float = 0.0
    lam_i: float = 0.0
    lam_j: float = 0.0
    lam_b: float | None = None

    def __post_init__(self):
        if self.variant not in REG_VARIANTS:
            raise ConfigError(f"unknown regularization variant {self.variant!r}")
        for name in ("lam", "lam_u", "lam_i", "lam_j", "lam_b"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise ConfigError(f"{name} must be >= 0, got {v}")

    def coefficients(self) -> tuple[float, float, float, float]:
        """``(lam_u, lam_i, lam_j, lam_b)`` after variant substitution."""
        if self.variant == "none":
            return 0.0, 0.0, 0.0, (0.0 if self.lam_b is None else self.lam_b)
        if self.variant == "shared":
            lb = self.lam if self.lam_b is None else self.lam_b
            return self.lam, self.lam, self.lam, lb
        lb = self.lam_i if self.lam_b is None else self.lam_b
        if self.variant == "user_item":
            return self.lam_u, self.lam_i, self.lam_i, lb
        return self.lam_u, self.lam_i, self.lam_j, lb

    def label(self) -> str:
        return {
            "none": "none",
            "shared": "(lam)",
            "user_item": "(lam_u, lam_i)",
            "separate": "(lam_u, lam_i, lam_j)",
        }[self.variant]


@dataclass(frozen=True)
class TripleGrad:
    g_pu: np.ndarray
    g_qi: np.ndarray
    g_qj: np.ndarray
    g_bi: float
    g_bj: float
    loss_value: float


def softplus_neg(x: float) -> float:
    """``-log(sigmoid(x)) = log(1 + exp(-x))`` without overflow."""
    if x >= 0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def pair_margin(params: ModelParams, u: int, i: int, j: int) -> float:
    """``x_uij = r(u, i) - r(u, j)``."""
    p = params.P[u]
    x = float(p @ (params.Q[i] - params.Q[j]))
    if params.item_bias is not None:
        x += float(params.item_bias[i] - params.item_bias[j])
    return x


def bpr_loss(params: ModelParams, u: int, i: int, j: int, reg: RegScheme | None = None) -> float:
    reg = reg or RegScheme("none")
    lu, li, lj, lb = reg.coefficients()
    x = pair_margin(params, u, i, j)
    loss = softplus_neg(x)
    p, qi, qj = params.P[u], params.Q[i], params.Q[j]
    loss += lu * float(p @ p) + li * float(qi @ qi) + lj * float(qj @ qj)
    if params.item_bias is not None:
        bi, bj = params.item_bias[i], params.item_bias[j]
        loss += lb * float(bi * bi + bj * bj)
    return loss


def bpr_grad(params: ModelParams, u: int, i: int, j: int, reg: RegScheme | None = None) -> TripleGrad:
    reg = reg or RegScheme("none")
    lu, li, lj, lb = reg.coefficients()
    p, qi, qj = params.P[u], params.Q[i], params.Q[j]
    x = pair_margin(params, u, i, j)
    s = sigmoid(-x)
    g_pu = -s * (qi - qj) + 2.0 * lu * p
    g_qi = -s * p + 2.0 * li * qi
    g_qj = s * p + 2.0 * lj * qj
    if params.item_bias is not None:
        g_bi = -s + 2.0 * lb * float(params.item_bias[i])
        g_bj = s + 2.0 * lb * float(params.item_bias[j])
    else:
        g_bi = g_bj = 0.0
    return TripleGrad(g_pu, g_qi, g_qj, g_bi, g_bj, bpr_loss(params, u, i, j, reg))


def auc_pair_indicator(params: ModelParams, u: int, i: int, j: int) -> float:
    si, sj = score(params, u, i), score(params, u, j)
    if si > sj:
        return 1.0
    if si == sj:
        return 0.5
    return 0.0
