"""Implicit-feedback logs, preprocessing filters and evaluation splits.

Everything here operates on :class:`InteractionLog`, an immutable table of
``(user, item, timestamp)`` events over dense integer indices.  Splits keep the
index space of the log they were cut from, so a model trained on
``bundle.train`` can score every user and item that appears in the evaluation
parts.
"""
from __future__ import annotations

import csv
import gzip
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .errors import ConfigError, EmptyDataset, ParseError, SplitError

YEAR_SECONDS = int(365.25 * 24 * 3600)

COLUMN_NAMES = {"user", "item", "rating", "timestamp", "-"}


@dataclass(frozen=True)
class LogFormat:
    """How to read a delimiter-separated interaction file.

    ``columns`` names each field in order; ``"-"`` skips a field.  Ratings are
    read (and validated as numbers) but discarded: presence of a row is the
    positive signal.  With ``min_rating`` set, rows rated below it are dropped
    first.
    """

    delimiter: str = "\t"
    columns: tuple[str, ...] = ("user", "item", "rating", "timestamp")
    header: bool = False
    min_rating: float | None = None

    def __post_init__(self):
        unknown = set(self.columns) - COLUMN_NAMES
        if unknown:
            raise ConfigError(f"unknown column names {sorted(unknown)}")
        if "user" not in self.columns or "item" not in self.columns:
            raise ConfigError("format needs both a 'user' and an 'item' column")
        if self.min_rating is not None and "rating" not in self.columns:
            raise ConfigError("min_rating needs a 'rating' column")


@dataclass(frozen=True, eq=False)
class InteractionLog:
    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray
    user_count: int
    item_count: int
    user_ids: np.ndarray = field(default=None, repr=False)
    item_ids: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("users", "items", "timestamps"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.int64))
        if not (len(self.users) == len(self.items) == len(self.timestamps)):
            raise ValueError("event columns differ in length")
        if self.user_ids is None:
            object.__setattr__(self, "user_ids", np.arange(self.user_count).astype(str))
        if self.item_ids is None:
            object.__setattr__(self, "item_ids", np.arange(self.item_count).astype(str))

    def __len__(self) -> int:
        return len(self.users)

    @property
    def n_events(self) -> int:
        return len(self.users)

    @classmethod
    def from_events(cls, events, user_count=None, item_count=None, user_ids=None, item_ids=None):
        """Build a log from ``(user, item[, timestamp])`` tuples of dense indices.

        Duplicated pairs collapse to their earliest timestamp.
        """
        events = [tuple(e) for e in events]
        width = len(events[0]) if events else 3
        arr = np.asarray(events, dtype=np.int64).reshape(-1, width)
        if width == 2:
            arr = np.column_stack([arr, np.zeros(len(arr), dtype=np.int64)])
        u, i, t = arr[:, 0], arr[:, 1], arr[:, 2]
        uc = int(u.max()) + 1 if user_count is None and len(u) else (user_count or 0)
        ic = int(i.max()) + 1 if item_count is None and len(i) else (item_count or 0)
        u, i, t = _collapse_duplicates(u, i, t)
        return cls(u, i, t, uc, ic, user_ids, item_ids)

    def select(self, mask: np.ndarray) -> "InteractionLog":
        """Subset of events, same index space."""
        return InteractionLog(
            self.users[mask], self.items[mask], self.timestamps[mask],
            self.user_count, self.item_count, self.user_ids, self.item_ids,
        )

    def concat(self, other: "InteractionLog") -> "InteractionLog":
        if other.user_count != self.user_count or other.item_count != self.item_count:
            raise ValueError("logs live in different index spaces")
        u = np.concatenate([self.users, other.users])
        i = np.concatenate([self.items, other.items])
        t = np.concatenate([self.timestamps, other.timestamps])
        u, i, t = _collapse_duplicates(u, i, t)
        return InteractionLog(u, i, t, self.user_count, self.item_count, self.user_ids, self.item_ids)

    def to_csr(self) -> sp.csr_matrix:
        data = np.ones(len(self), dtype=np.float64)
        m = sp.csr_matrix((data, (self.users, self.items)), shape=(self.user_count, self.item_count))
        m.sum_duplicates()
        m.sort_indices()
        return m

    @cached_property
    def history(self) -> "UserHistoryIndex":
        return UserHistoryIndex.from_log(self)

    def user_counts(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.user_count)

    def item_counts(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.item_count)

    def event_set(self) -> set[tuple[int, int]]:
        return set(zip(self.users.tolist(), self.items.tolist()))


def _collapse_duplicates(u, i, t):
    if len(u) == 0:
        return u, i, t
    order = np.lexsort((t, i, u))
    u, i, t = u[order], i[order], t[order]
    keep = np.ones(len(u), dtype=bool)
    keep[1:] = (u[1:] != u[:-1]) | (i[1:] != i[:-1])
    return u[keep], i[keep], t[keep]


@dataclass(frozen=True, eq=False)
class UserHistoryIndex:
    """CSR view of a log: ``items_of(u)`` is the sorted positive set of ``u``."""

    indptr: np.ndarray
    indices: np.ndarray
    item_counts: np.ndarray
    event_users: np.ndarray
    event_items: np.ndarray

    @classmethod
    def from_log(cls, log: InteractionLog) -> "UserHistoryIndex":
        order = np.lexsort((log.items, log.users))
        users, items = log.users[order], log.items[order]
        indptr = np.zeros(log.user_count + 1, dtype=np.int64)
        np.cumsum(np.bincount(users, minlength=log.user_count), out=indptr[1:])
        return cls(indptr, items.copy(), log.item_counts(), users, items)

    @property
    def user_count(self) -> int:
        return len(self.indptr) - 1

    @property
    def item_count(self) -> int:
        return len(self.item_counts)

    @property
    def n_events(self) -> int:
        return len(self.indices)

    def items_of(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.indptr[u + 1] - self.indptr[u])

    def contains(self, u: int, i: int) -> bool:
        row = self.items_of(u)
        k = np.searchsorted(row, i)
        return bool(k < len(row) and row[k] == i)


@dataclass(frozen=True, eq=False)
class EvalSplit:
    """Per-user visible items (``fold_in``) and held-out items (``targets``)."""

    fold_in: InteractionLog
    targets: InteractionLog

    @cached_property
    def users(self) -> np.ndarray:
        return np.unique(self.targets.users)

    @cached_property
    def _target_hist(self) -> UserHistoryIndex:
        return self.targets.history

    @cached_property
    def _fold_hist(self) -> UserHistoryIndex:
        return self.fold_in.history

    def targets_of(self, u: int) -> np.ndarray:
        return self._target_hist.items_of(u)

    def fold_in_of(self, u: int) -> np.ndarray:
        return self._fold_hist.items_of(u)

    def fold_in_matrix(self) -> sp.csr_matrix:
        return self.fold_in.to_csr()

    def __len__(self) -> int:
        return len(self.users)


@dataclass(frozen=True, eq=False)
class SplitBundle:
    train: InteractionLog
    validation: EvalSplit
    test: EvalSplit
    protocol_tag: str
    boundaries: tuple[int, int] | None = None
    params: dict = field(default_factory=dict)

    def resplit(self, log: InteractionLog, seed: int | None = None) -> "SplitBundle":
        """Cut ``log`` with the same protocol and parameters as this bundle."""
        if self.protocol_tag == "user-based":
            return split_user_based(
                log,
                self.params["n_heldout_users"],
                self.params["fold_in_fraction"],
                self.params["seed"] if seed is None else seed,
            )
        if self.protocol_tag == "temporal":
            return split_temporal(log, self.params["test_window"], self.params["val_window"])
        raise SplitError(f"cannot resplit protocol {self.protocol_tag!r}")


@dataclass(frozen=True)
class StatsRecord:
    users: int
    items: int
    actions: int
    sparsity: float
    med_user: float
    med_item: float

    def to_dict(self) -> dict:
        return {
            "users": self.users,
            "items": self.items,
            "actions": self.actions,
            "sparsity": self.sparsity,
            "med_user": self.med_user,
            "med_item": self.med_item,
        }


def _open_text(path: Path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def ingest(path, fmt: LogFormat | None = None) -> InteractionLog:
    """Read an interaction file into a densely indexed, de-duplicated log.

    Raw user and item ids are kept as strings and mapped to dense indices in
    sorted order, so the mapping does not depend on row order.
    """
    fmt = fmt or LogFormat()
    path = Path(path)
    rows: list[list[str]] = []
    ncol = len(fmt.columns)
    with _open_text(path) as fh:
        reader = csv.reader(fh, delimiter=fmt.delimiter)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and fmt.header:
                continue
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != ncol:
                raise ParseError(f"expected {ncol} fields, got {len(row)}", line=lineno, path=path)
            rows.append(row + [str(lineno)])
    if not rows:
        raise EmptyDataset(f"{path}: no interactions")
    df = pd.DataFrame(rows, columns=[f"c{k}" for k in range(ncol)] + ["lineno"])
    col = {name: f"c{k}" for k, name in enumerate(fmt.columns) if name != "-"}

    def numeric(name, kind):
        values = pd.to_numeric(df[col[name]], errors="coerce")
        bad = values.isna().to_numpy()
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise ParseError(
                f"non-numeric {name} {df[col[name]].iloc[k]!r}", line=int(df["lineno"].iloc[k]), path=path
            )
        return values.to_numpy(dtype=kind)

    if "rating" in col:
        ratings = numeric("rating", np.float64)
        if fmt.min_rating is not None:
            df = df[ratings >= fmt.min_rating].reset_index(drop=True)
            if len(df) == 0:
                raise EmptyDataset(f"{path}: no interactions rated >= {fmt.min_rating}")
    ts = numeric("timestamp", np.float64).astype(np.int64) if "timestamp" in col else np.zeros(len(df), np.int64)
    for name in ("user", "item"):
        empty = (df[col[name]].str.strip() == "").to_numpy()
        if empty.any():
            k = int(np.flatnonzero(empty)[0])
            raise ParseError(f"empty {name} id", line=int(df["lineno"].iloc[k]), path=path)
    user_codes, user_ids = pd.factorize(df[col["user"]].str.strip(), sort=True)
    item_codes, item_ids = pd.factorize(df[col["item"]].str.strip(), sort=True)
    u, i, t = _collapse_duplicates(user_codes.astype(np.int64), item_codes.astype(np.int64), ts)
    return InteractionLog(
        u, i, t, len(user_ids), len(item_ids), np.asarray(user_ids, dtype=object), np.asarray(item_ids, dtype=object)
    )


def densify(log: InteractionLog) -> InteractionLog:
    """Drop users and items without events and renumber the rest contiguously."""
    if len(log) == 0:
        raise EmptyDataset("no interactions left")
    ukeep = np.unique(log.users)
    ikeep = np.unique(log.items)
    umap = np.full(log.user_count, -1, dtype=np.int64)
    imap = np.full(log.item_count, -1, dtype=np.int64)
    umap[ukeep] = np.arange(len(ukeep))
    imap[ikeep] = np.arange(len(ikeep))
    return InteractionLog(
        umap[log.users], imap[log.items], log.timestamps, len(ukeep), len(ikeep),
        log.user_ids[ukeep], log.item_ids[ikeep],
    )


def filter_min_interactions(log: InteractionLog, min_user: int, min_item: int) -> InteractionLog:
    """Keep users with >= ``min_user`` and items with >= ``min_item`` events.

    User and item passes alternate until neither removes anything, so the
    result is a fixed point of the filter.
    """
    if min_user < 1 or min_item < 1:
        raise ConfigError("min_user and min_item must be >= 1")
    mask = np.ones(len(log), dtype=bool)
    while True:
        uc = np.bincount(log.users[mask], minlength=log.user_count)
        ic = np.bincount(log.items[mask], minlength=log.item_count)
        keep = mask & (uc[log.users] >= min_user) & (ic[log.items] >= min_item)
        if np.array_equal(keep, mask):
            break
        mask = keep
    if not mask.any():
        raise EmptyDataset("all interactions were filtered out")
    return densify(log.select(mask))


def subsample_users(log: InteractionLog, target_events: int, seed: int) -> InteractionLog:
    """Random users, whole histories, until at least ``target_events`` events are kept."""
    rng = np.random.default_rng(seed)
    counts = log.user_counts()
    order = rng.permutation(np.flatnonzero(counts))
    cum = np.cumsum(counts[order])
    n = int(np.searchsorted(cum, target_events)) + 1
    chosen = np.zeros(log.user_count, dtype=bool)
    chosen[order[:n]] = True
    return densify(log.select(chosen[log.users]))


def _fold_in_count(n: int, fraction: float) -> int:
    return int(np.floor(n * fraction + 0.5))


def split_user_based(
    log: InteractionLog, n_heldout_users: int, fold_in_fraction: float, seed: int
) -> SplitBundle:
    """Strong-generalization split with held-out users folded into training.

    ``n_heldout_users`` users go to validation and as many to test.  For each
    held-out user a random ``fold_in_fraction`` of their events is visible at
    prediction time and also appended to the training log; the rest are the
    targets.  Users whose history cannot produce both a non-empty fold-in and
    non-empty targets are skipped in favour of the next sampled user.
    """
    if not 0.0 < fold_in_fraction < 1.0:
        raise ConfigError("fold_in_fraction must be in (0, 1)")
    if n_heldout_users < 1 or 2 * n_heldout_users >= log.user_count:
        raise SplitError(
            f"cannot hold out 2 x {n_heldout_users} users from {log.user_count} users"
        )
    rng = np.random.default_rng(seed)
    hist = log.history
    counts = log.user_counts()
    n_fold = np.array([_fold_in_count(int(c), fold_in_fraction) for c in counts])
    eligible = (n_fold >= 1) & (counts - n_fold >= 1)
    perm = rng.permutation(log.user_count)
    perm = perm[eligible[perm]]
    if len(perm) < 2 * n_heldout_users:
        raise SplitError(
            f"only {len(perm)} users can be held out with fold_in_fraction={fold_in_fraction}"
        )
    val_users = np.sort(perm[:n_heldout_users])
    test_users = np.sort(perm[n_heldout_users:2 * n_heldout_users])

    # event positions grouped by user, in the same order the history index uses
    order = np.lexsort((log.items, log.users))
    role = np.zeros(len(log), dtype=np.int8)  # 0 train, 1 fold-in, 2 target
    part = np.zeros(len(log), dtype=np.int8)  # 1 validation, 2 test
    for tag, users in ((1, val_users), (2, test_users)):
        for u in users:
            pos = order[hist.indptr[u]:hist.indptr[u + 1]]
            shuffled = pos[rng.permutation(len(pos))]
            k = n_fold[u]
            role[shuffled[:k]] = 1
            role[shuffled[k:]] = 2
            part[pos] = tag

    train = log.select(role != 2)

    def eval_split(tag):
        return EvalSplit(log.select((part == tag) & (role == 1)), log.select((part == tag) & (role == 2)))

    return SplitBundle(
        train=train,
        validation=eval_split(1),
        test=eval_split(2),
        protocol_tag="user-based",
        boundaries=None,
        params={"n_heldout_users": int(n_heldout_users), "fold_in_fraction": float(fold_in_fraction), "seed": int(seed)},
    )


def split_temporal(log: InteractionLog, test_window: int, val_window: int) -> SplitBundle:
    """Global time split: the last ``test_window`` seconds are test, the
    ``val_window`` before that validation, everything earlier training.

    An event at exactly a boundary belongs to the later part.  Validation users
    without training events and test users without training or validation
    events are dropped.
    """
    test_window, val_window = int(round(test_window)), int(round(val_window))
    if test_window <= 0 or val_window <= 0:
        raise ConfigError("time windows must be positive")
    if len(log) == 0:
        raise SplitError("empty log")
    ts = log.timestamps
    lo, hi = int(ts.min()), int(ts.max())
    if test_window + val_window >= hi - lo:
        raise SplitError(
            f"windows ({test_window} + {val_window}s) do not fit the log span of {hi - lo}s"
        )
    test_start = hi - test_window
    val_start = test_start - val_window
    is_train = ts < val_start
    is_val = (ts >= val_start) & (ts < test_start)
    is_test = ts >= test_start

    train = log.select(is_train)
    if len(train) == 0:
        raise SplitError("no training events before the validation window")
    known = np.zeros(log.user_count, dtype=bool)
    known[train.users] = True
    val_mask = is_val & known[log.users]
    known_complete = known.copy()
    known_complete[log.users[is_val]] = True
    test_mask = is_test & known_complete[log.users]
    if not val_mask.any() or not test_mask.any():
        raise SplitError("validation or test part is empty after removing cold users")

    val_users = np.zeros(log.user_count, dtype=bool)
    val_users[log.users[val_mask]] = True
    test_users = np.zeros(log.user_count, dtype=bool)
    test_users[log.users[test_mask]] = True
    validation = EvalSplit(log.select(is_train & val_users[log.users]), log.select(val_mask))
    test = EvalSplit(log.select((is_train | is_val) & test_users[log.users]), log.select(test_mask))
    return SplitBundle(
        train=train,
        validation=validation,
        test=test,
        protocol_tag="temporal",
        boundaries=(int(val_start), int(test_start)),
        params={"test_window": test_window, "val_window": val_window},
    )


def dataset_stats(log: InteractionLog) -> StatsRecord:
    if len(log) == 0:
        raise EmptyDataset("stats of an empty log")
    uc = log.user_counts()
    ic = log.item_counts()
    uc, ic = uc[uc > 0], ic[ic > 0]
    users, items, actions = len(uc), len(ic), len(log)
    return StatsRecord(
        users=users,
        items=items,
        actions=actions,
        sparsity=1.0 - actions / (users * items),
        med_user=float(np.median(uc)),
        med_item=float(np.median(ic)),
    )


def synthetic_log(
    n_users: int = 943,
    n_items: int = 1682,
    n_topics: int = 12,
    mean_events: float = 100.0,
    popularity_exponent: float = 1.0,
    affinity: float = 1.0,
    span_days: int = 3650,
    seed: int = 0,
) -> InteractionLog:
    """Deterministic implicit-feedback log with taste clusters and popularity skew.

    Item popularity follows a Zipf law with ``popularity_exponent``; each user
    prefers a sparse mixture of topics and item choice probability is
    ``popularity * exp(affinity * <user topics, item topics>)``.  Timestamps are
    spread uniformly over ``span_days``.
    """
    rng = np.random.default_rng(seed)
    pop = 1.0 / np.arange(1, n_items + 1) ** popularity_exponent
    pop = pop[rng.permutation(n_items)]
    item_topics = rng.dirichlet(np.full(n_topics, 0.1), size=n_items)
    user_topics = rng.dirichlet(np.full(n_topics, 0.1), size=n_users)
    sizes = np.clip(rng.lognormal(np.log(mean_events) - 0.5, 1.0, size=n_users).astype(int), 5, n_items // 2)
    rows_u, rows_i = [], []
    for u in range(n_users):
        logits = np.log(pop) + affinity * n_topics * (item_topics @ user_topics[u])
        w = np.exp(logits - logits.max())
        w /= w.sum()
        chosen = rng.choice(n_items, size=sizes[u], replace=False, p=w)
        rows_u.append(np.full(len(chosen), u))
        rows_i.append(chosen)
    u = np.concatenate(rows_u)
    i = np.concatenate(rows_i)
    t = rng.integers(0, span_days * 86400, size=len(u)) + 946684800
    u, i, t = _collapse_duplicates(u.astype(np.int64), i.astype(np.int64), t.astype(np.int64))
    return InteractionLog(u, i, t, n_users, n_items)


# ---------------------------------------------------------------------------
# split artifacts on disk


def _write_events(path: Path, log: InteractionLog, part: Sequence[str] | None = None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        if part is None:
            w.writerow(["user", "item", "timestamp"])
            w.writerows(zip(log.users.tolist(), log.items.tolist(), log.timestamps.tolist()))
        else:
            w.writerow(["user", "item", "timestamp", "part"])
            w.writerows(zip(log.users.tolist(), log.items.tolist(), log.timestamps.tolist(), part))


def _write_eval(path: Path, split: EvalSplit):
    both = InteractionLog(
        np.concatenate([split.fold_in.users, split.targets.users]),
        np.concatenate([split.fold_in.items, split.targets.items]),
        np.concatenate([split.fold_in.timestamps, split.targets.timestamps]),
        split.fold_in.user_count, split.fold_in.item_count,
    )
    part = ["fold_in"] * len(split.fold_in) + ["target"] * len(split.targets)
    _write_events(path, both, part)


def write_split(bundle: SplitBundle, directory) -> dict:
    """Write ``train.tsv``, ``validation.tsv``, ``test.tsv``, id maps and ``split.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_events(d / "train.tsv", bundle.train)
    _write_eval(d / "validation.tsv", bundle.validation)
    _write_eval(d / "test.tsv", bundle.test)
    (d / "users.txt").write_text("".join(f"{x}\n" for x in bundle.train.user_ids))
    (d / "items.txt").write_text("".join(f"{x}\n" for x in bundle.train.item_ids))
    sidecar = {
        "protocol": bundle.protocol_tag,
        "boundaries": None if bundle.boundaries is None else {
            "val_start": bundle.boundaries[0], "test_start": bundle.boundaries[1]
        },
        "params": bundle.params,
        "user_count": bundle.train.user_count,
        "item_count": bundle.train.item_count,
        "counts": {
            "train_events": len(bundle.train),
            "validation_users": len(bundle.validation),
            "validation_fold_in": len(bundle.validation.fold_in),
            "validation_targets": len(bundle.validation.targets),
            "test_users": len(bundle.test),
            "test_fold_in": len(bundle.test.fold_in),
            "test_targets": len(bundle.test.targets),
        },
    }
    (d / "split.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return sidecar


def read_split(directory) -> SplitBundle:
    d = Path(directory)
    meta = json.loads((d / "split.json").read_text())
    uc, ic = meta["user_count"], meta["item_count"]
    user_ids = np.array((d / "users.txt").read_text().splitlines(), dtype=object)
    item_ids = np.array((d / "items.txt").read_text().splitlines(), dtype=object)

    def load(name):
        df = pd.read_csv(d / name, sep="\t", dtype={"user": np.int64, "item": np.int64, "timestamp": np.int64})
        return df

    def to_log(df):
        return InteractionLog(
            df["user"].to_numpy(), df["item"].to_numpy(), df["timestamp"].to_numpy(), uc, ic, user_ids, item_ids
        )

    train = to_log(load("train.tsv"))

    def eval_split(name):
        df = load(name)
        return EvalSplit(to_log(df[df["part"] == "fold_in"]), to_log(df[df["part"] == "target"]))

    b = meta.get("boundaries")
    return SplitBundle(
        train=train,
        validation=eval_split("validation.tsv"),
        test=eval_split("test.tsv"),
        protocol_tag=meta["protocol"],
        boundaries=None if b is None else (b["val_start"], b["test_start"]),
        params=meta.get("params", {}),
    )


def write_log(log: InteractionLog, path, fmt: LogFormat | None = None) -> None:
    """Write a log with raw ids, the inverse of :func:`ingest` for ``user,item,timestamp`` files."""
    fmt = fmt or LogFormat(columns=("user", "item", "timestamp"))
    values = {
        "user": log.user_ids[log.users],
        "item": log.item_ids[log.items],
        "timestamp": log.timestamps,
        "rating": np.ones(len(log), dtype=np.int64),
        "-": np.zeros(len(log), dtype=np.int64),
    }
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=fmt.delimiter, lineterminator="\n")
        if fmt.header:
            w.writerow(list(fmt.columns))
        w.writerows(zip(*(values[c].tolist() for c in fmt.columns)))


def iter_users(split: EvalSplit) -> Iterable[int]:
    return (int(u) for u in split.users)
