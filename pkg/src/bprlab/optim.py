"""Row-wise first-order update rules and first-moment telemetry.

Parameters are updated one embedding row at a time, as the triple sampler
touches them.  Optimizer state is kept per row; Adam bias correction uses a
per-row step counter that only advances when that row is updated.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericsError

OPTIMIZERS = ("sgd", "momentum_sgd", "rmsprop", "adam")
KIND_CODES = {k: n for n, k in enumerate(OPTIMIZERS)}
MOMENTUM_KINDS = ("momentum_sgd", "adam")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd"
    learning_rate: float = 0.05
    beta: float = 0.9
    rho: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.kind!r}; expected one of {OPTIMIZERS}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("beta", "rho", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {v}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    @property
    def momentum_decay(self) -> float:
        return self.beta if self.kind == "momentum_sgd" else self.beta1


class OptimizerState:
    """Moment slots for one parameter table (``n_rows`` x ``width``).

    ``m`` exists for momentum kinds, ``v`` for rmsprop/adam; ``t`` counts
    updates per row for every kind, so ``t > 0`` marks the rows that have
    ever been touched.
    """

    def __init__(self, n_rows: int, width: int, kind: str, dtype=np.float64):
        self.kind = kind
        self.t = np.zeros(n_rows, dtype=np.int64)
        self.m = np.zeros((n_rows, width), dtype=dtype) if kind in MOMENTUM_KINDS else None
        self.v = np.zeros((n_rows, width), dtype=dtype) if kind in ("rmsprop", "adam") else None

    @property
    def touched(self) -> np.ndarray:
        return np.flatnonzero(self.t)


def apply_update(state: OptimizerState, row_id: int, row: np.ndarray, grad, cfg: OptimizerConfig) -> np.ndarray:
    """Return the updated row; moments in ``state`` advance in place."""
    g = np.asarray(grad, dtype=np.float64)
    lr = cfg.learning_rate
    state.t[row_id] += 1
    t = state.t[row_id]
    with np.errstate(over="ignore", invalid="ignore"):
        new = _step(state, row_id, row, g, cfg, lr, t)
    if not np.all(np.isfinite(new)):
        raise NumericsError(
            f"non-finite parameter after {cfg.kind} update of row {row_id} at step {t}", row=row_id, step=int(t)
        )
    return new


def _step(state, row_id, row, g, cfg, lr, t):
    if cfg.kind == "sgd":
        new = row - lr * g
    elif cfg.kind == "momentum_sgd":
        m = cfg.beta * state.m[row_id] + g
        state.m[row_id] = m
        new = row - lr * m
    elif cfg.kind == "rmsprop":
        v = cfg.rho * state.v[row_id] + (1.0 - cfg.rho) * g * g
        state.v[row_id] = v
        new = row - lr * g / (np.sqrt(v) + cfg.eps)
    else:
        m = cfg.beta1 * state.m[row_id] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[row_id] + (1.0 - cfg.beta2) * g * g
        state.m[row_id] = m
        state.v[row_id] = v
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        new = row - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return new


@dataclass
class MomentumTelemetry:
    """Mean absolute first moment over the rows touched in each window of triples."""

    window: int = 1000
    iterations: list[int] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    _step: int = 0
    _touched: dict = field(default_factory=dict, repr=False)

    def touch(self, table: str, row: int) -> None:
        self._touched.setdefault(table, set()).add(int(row))

    def step(self, states: dict[str, OptimizerState]) -> None:
        self._step += 1
        if self._step % self.window:
            return
        total, count = 0.0, 0
        for table, rows in self._touched.items():
            m = states[table].m
            if m is None or not rows:
                continue
            block = np.abs(m[sorted(rows)])
            total += float(block.sum())
            count += block.size
        self.iterations.append(self._step)
        self.values.append(total / count if count else 0.0)
        self._touched = {}

    def extend(self, iterations, values) -> None:
        self.iterations.extend(int(x) for x in iterations)
        self.values.extend(float(x) for x in values)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "mean_abs_m"])
            w.writerows(zip(self.iterations, (repr(v) for v in self.values)))
        return path

    @classmethod
    def from_csv(cls, path) -> "MomentumTelemetry":
        tel = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                tel.iterations.append(int(row["iteration"]))
                tel.values.append(float(row["mean_abs_m"]))
        return tel


def record_momentum(states: dict[str, OptimizerState], telemetry: MomentumTelemetry, kind: str) -> None:
    """Advance the telemetry by one triple; a no-op for optimizers without a first moment."""
    if kind not in MOMENTUM_KINDS:
        return
    telemetry.step(states)
