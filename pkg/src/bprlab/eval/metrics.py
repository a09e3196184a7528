"""Top-n ranking with train-item exclusion, NDCG@K, Recall@K and AUC."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..data import EvalSplit

DEFAULT_KS = (5, 10, 100)


def rank_topn(scores: np.ndarray, exclude, n: int) -> np.ndarray:
    """Top-``n`` item indices by descending score, ties broken by ascending index."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s = np.asarray(scores, dtype=np.float64).copy()
    excl = np.asarray(list(exclude) if not isinstance(exclude, np.ndarray) else exclude, dtype=np.int64)
    allowed = np.ones(len(s), dtype=bool)
    allowed[excl] = False
    cand = np.flatnonzero(allowed)
    if len(cand) == 0:
        return np.empty(0, dtype=np.int64)
    cs = s[cand]
    if len(cand) > n:
        kth = np.partition(-cs, n - 1)[n - 1]
        keep = -cs <= kth
        cand, cs = cand[keep], cs[keep]
    order = np.argsort(-cs, kind="stable")
    return cand[order][:n]


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, k + 2))


def ndcg_at_k(ranked, targets, k: int) -> float:
    t = set(int(x) for x in targets)
    top = list(ranked)[:k]
    disc = _discounts(k)
    dcg = sum(disc[n] for n, item in enumerate(top) if int(item) in t)
    idcg = disc[: min(k, len(t))].sum()
    return float(dcg / idcg)


def recall_at_k(ranked, targets, k: int) -> float:
    t = set(int(x) for x in targets)
    hits = sum(1 for item in list(ranked)[:k] if int(item) in t)
    return hits / min(k, len(t))


def auc_from_scores(scores: np.ndarray, targets, excluded=()) -> float:
    """Fraction of (target, candidate negative) pairs ordered correctly, ties count 1/2.

    Negatives are all items outside ``targets`` and ``excluded``.  Returns NaN
    when there is no negative candidate.
    """
    scores = np.asarray(scores, dtype=np.float64)
    tmask = np.zeros(len(scores), dtype=bool)
    tmask[np.asarray(list(targets), dtype=np.int64)] = True
    nmask = ~tmask
    ex = np.asarray(list(excluded) if not isinstance(excluded, np.ndarray) else excluded, dtype=np.int64)
    nmask[ex] = False
    neg = np.sort(scores[nmask])
    if len(neg) == 0:
        return float("nan")
    pos = scores[tmask]
    below = np.searchsorted(neg, pos, side="left")
    ties = np.searchsorted(neg, pos, side="right") - below
    return float((below + 0.5 * ties).sum() / (len(pos) * len(neg)))


def auc(params, u: int, targets, excluded) -> float:
    """Per-user AUC for a model exposing ``scores(users)``."""
    s = params.scores(np.array([u]))[0]
    return auc_from_scores(s, targets, excluded)


@dataclass
class MetricsReport:
    per_user: dict[str, np.ndarray]
    users: np.ndarray
    ks: tuple[int, ...] = DEFAULT_KS
    name: str = ""
    aggregates: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = {m: float(np.nanmean(v)) if len(v) else float("nan") for m, v in self.per_user.items()}

    def __getitem__(self, metric: str) -> float:
        return self.aggregates[metric]

    def to_dict(self) -> dict:
        return {"name": self.name, "ks": list(self.ks), "n_users": int(len(self.users)), "aggregates": self.aggregates}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_per_user_csv(self, path) -> None:
        names = list(self.per_user)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user"] + names)
            for n, u in enumerate(self.users.tolist()):
                w.writerow([u] + [repr(float(self.per_user[m][n])) for m in names])

    @classmethod
    def read_per_user_csv(cls, path, name: str = "") -> "MetricsReport":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        users = np.array([int(r[0]) for r in body], dtype=np.int64)
        per_user = {m: np.array([float(r[c + 1]) for r in body]) for c, m in enumerate(header[1:])}
        ks = tuple(sorted({int(m.split("@")[1]) for m in header[1:] if "@" in m}))
        return cls(per_user, users, ks or DEFAULT_KS, name=name or Path(path).stem.removesuffix(".per_user"))


def metric_names(ks: Sequence[int], with_auc: bool = False) -> list[str]:
    names = [f"ndcg@{k}" for k in ks] + [f"recall@{k}" for k in ks]
    if with_auc:
        names.append("auc")
    return names


def evaluate(model, split: EvalSplit, ks: Sequence[int] = DEFAULT_KS, with_auc: bool = False,
             batch_size: int = 512, name: str = "") -> MetricsReport:
    """Score every user in ``split`` and compute per-user metrics.

    ``model`` exposes ``scores(users, fold_in)`` returning a dense
    ``len(users) x item_count`` matrix; the fold-in items are excluded from the
    rankings and from AUC negatives.
    """
    ks = tuple(sorted(int(k) for k in ks))
    users = split.users
    kmax = max(ks)
    fold = split.fold_in_matrix()
    names = metric_names(ks, with_auc)
    out = {m: np.empty(len(users)) for m in names}
    disc = _discounts(kmax)
    cdisc = np.concatenate([[0.0], np.cumsum(disc)])
    for start in range(0, len(users), batch_size):
        batch = users[start:start + batch_size]
        S = np.asarray(model.scores(batch, fold[batch]), dtype=np.float64)
        for row, u in enumerate(batch):
            n = start + row
            seen = split.fold_in_of(u)
            targets = split.targets_of(u)
            ranked = rank_topn(S[row], seen, kmax)
            hit = np.isin(ranked, targets)
            for k in ks:
                hk = hit[:k]
                dcg = float(disc[: len(hk)][hk].sum())
                out[f"ndcg@{k}"][n] = dcg / cdisc[min(k, len(targets))]
                out[f"recall@{k}"][n] = float(hk.sum()) / min(k, len(targets))
            if with_auc:
                out["auc"][n] = auc_from_scores(S[row], targets, seen)
    if with_auc:
        valid = ~np.isnan(out["auc"])
        if not valid.all():
            users = users[valid]
            out = {m: v[valid] for m, v in out.items()}
    return MetricsReport(out, users.copy(), ks, name=name)
