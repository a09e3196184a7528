"""Training runs with early stopping, the sequential feature ablation, and
two-stage random hyperparameter search."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernel
from .data import EvalSplit, InteractionLog, SplitBundle
from .errors import BPRLabError, ConfigError, NoNegativeAvailable, NumericsError, SearchError, SplitError
from .eval.metrics import DEFAULT_KS, evaluate
from .model import InitSpec, ModelParams, init, save_checkpoint
from .objective import REG_VARIANTS, RegScheme, bpr_grad
from .optim import MOMENTUM_KINDS, OPTIMIZERS, MomentumTelemetry, OptimizerConfig, OptimizerState, apply_update, record_momentum
from .rng import substream, subseed
from .sampling import (
    AdaptiveSamplerState,
    refresh_adaptive_state,
    sample_negative_adaptive,
    sample_negative_uniform,
    sample_positive,
)

logger = logging.getLogger(__name__)

SAMPLERS = ("uniform", "adaptive")


@dataclass(frozen=True)
class TrainConfig:
    f: int = 64
    use_item_bias: bool = False
    reg: RegScheme = field(default_factory=RegScheme)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sampler: str = "uniform"
    rank_temperature: float | None = None
    refresh_interval: int | None = None
    retry_cap: int = 50
    max_epochs: int = 70
    patience: int = 13
    eval_every: int = 1
    monitor: str = "ndcg@100"
    ks: tuple[int, ...] = DEFAULT_KS
    init: InitSpec = field(default_factory=InitSpec)
    dtype: str = "float64"
    seed: int = 0
    telemetry: bool = False
    telemetry_window: int = 1000
    backend: str = "numba"

    def __post_init__(self):
        if self.f < 1:
            raise ConfigError("f must be >= 1")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}; expected one of {SAMPLERS}")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.monitor != "auc":
            if not self.monitor.startswith("ndcg@") and not self.monitor.startswith("recall@"):
                raise ConfigError(f"monitor must be ndcg@K, recall@K or auc, got {self.monitor!r}")
            k = int(self.monitor.split("@")[1])
            if k not in self.ks:
                raise ConfigError(f"monitor {self.monitor} uses K={k}, which is not in ks={self.ks}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")
        if self.backend not in ("numba", "python"):
            raise ConfigError(f"backend must be numba or python, got {self.backend!r}")
        if self.rank_temperature is not None and not self.rank_temperature > 0:
            raise ConfigError("rank_temperature must be > 0")
        if self.refresh_interval is not None and self.refresh_interval < 1:
            raise ConfigError("refresh_interval must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ks"] = list(self.ks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["reg"] = RegScheme(**d.get("reg", {}))
        d["optimizer"] = OptimizerConfig(**d.get("optimizer", {}))
        d["init"] = InitSpec(**d.get("init", {}))
        d["ks"] = tuple(d.get("ks", DEFAULT_KS))
        return cls(**d)

    def label(self) -> str:
        return (
            f"bias={'on' if self.use_item_bias else 'off'} reg={self.reg.variant} "
            f"opt={self.optimizer.kind} sampler={self.sampler}"
        )


def with_overrides(cfg: TrainConfig, overrides: dict) -> TrainConfig:
    """Apply flat hyperparameter names (``learning_rate``, ``lam_u``, ``optimizer`` ...)."""
    top, reg, opt, ini = {}, {}, {}, {}
    reg_fields = {f.name for f in dataclasses.fields(RegScheme)}
    opt_fields = {f.name for f in dataclasses.fields(OptimizerConfig)}
    init_fields = {"std", "mean", "lo", "hi", "distribution", "bias_init"}
    top_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    for key, value in overrides.items():
        if key in ("reg_variant", "regularization"):
            reg["variant"] = value
        elif key in ("optimizer", "kind"):
            opt["kind"] = value
        elif key in ("lr",):
            opt["learning_rate"] = value
        elif key in reg_fields and key != "variant":
            reg[key] = value
        elif key in opt_fields:
            opt[key] = value
        elif key.startswith("init_") and key[5:] in init_fields:
            ini[key[5:]] = value
        elif key in top_fields and key not in ("reg", "optimizer", "init"):
            top[key] = value
        else:
            raise ConfigError(f"unknown hyperparameter {key!r}")
    out = cfg
    if reg:
        out = replace(out, reg=replace(out.reg, **reg))
    if opt:
        out = replace(out, optimizer=replace(out.optimizer, **opt))
    if ini:
        out = replace(out, init=replace(out.init, **ini))
    if top:
        out = replace(out, **top)
    return out


@dataclass
class RunRecord:
    name: str
    config: dict
    trace: list = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("nan")
    initial_metric: float = float("nan")
    epochs_run: int = 0
    stopped_early: bool = False
    test_metrics: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    seeds: dict = field(default_factory=dict)
    telemetry_path: str | None = None
    checkpoint_path: str | None = None
    flags: list = field(default_factory=list)
    status: str = "ok"
    error: str | None = None
    stage: str = ""
    trials: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["trials"] = [t.to_dict() if isinstance(t, RunRecord) else t for t in self.trials]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_json_default)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        d = dict(d)
        d["trials"] = [cls.from_dict(t) for t in d.get("trials", [])]
        d["trace"] = [tuple(x) for x in d.get("trace", [])]
        return cls(**d)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def append_record(path, record: RunRecord) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        fh.write(record.to_json() + "\n")


def read_records(path) -> list[RunRecord]:
    path = Path(path)
    if not path.exists():
        return []
    return [RunRecord.from_dict(json.loads(line)) for line in path.read_text().splitlines() if line.strip()]


class EarlyStopping:
    """Tracks the best monitored value; ``update`` returns True when training should stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.bad_evals = 0

    def update(self, epoch: int, value: float) -> bool:
        if not math.isnan(value) and value > self.best:
            self.best = value
            self.best_epoch = epoch
            self.bad_evals = 0
            return False
        self.bad_evals += 1
        return self.bad_evals >= self.patience


def monitor_value(params, split: EvalSplit, cfg: TrainConfig) -> float:
    if cfg.monitor == "auc":
        rep = evaluate(params, split, ks=(1,), with_auc=True)
        return rep["auc"]
    k = int(cfg.monitor.split("@")[1])
    return evaluate(params, split, ks=(k,))[cfg.monitor]


class _EpochRunner:
    """Owns parameters, optimizer state and sampler state for one run."""

    def __init__(self, train_log: InteractionLog, cfg: TrainConfig, telemetry: MomentumTelemetry | None):
        self.cfg = cfg
        self.log = train_log
        self.hist = train_log.history
        dtype = np.float64 if cfg.dtype == "float64" else np.float32
        self.params = init(
            train_log.user_count, train_log.item_count, cfg.f,
            replace(cfg.init, seed=subseed(cfg.seed, "init")), cfg.use_item_bias, dtype,
        )
        full = np.flatnonzero(np.diff(self.hist.indptr) >= train_log.item_count)
        if len(full):
            raise NoNegativeAvailable(f"user {int(full[0])} has interacted with every item")
        self.sampler_rng = substream(cfg.seed, "sampler")
        self.lam = cfg.reg.coefficients()
        kind = cfg.optimizer.kind
        nu, ni, f = train_log.user_count, train_log.item_count, cfg.f
        self.states = {
            "P": OptimizerState(nu, f, kind, dtype),
            "Q": OptimizerState(ni, f, kind, dtype),
            "b": OptimizerState(ni, 1, kind, dtype),
        }
        self.telemetry = telemetry if kind in MOMENTUM_KINDS else None
        self.adaptive = None
        if cfg.sampler == "adaptive":
            self.adaptive = AdaptiveSamplerState.empty(
                ni, f, cfg.rank_temperature, cfg.refresh_interval or len(train_log), cfg.retry_cap
            )
            refresh_adaptive_state(self.params, self.adaptive)
        self.steps = 0
        self._since_refresh = 0
        if cfg.backend == "numba":
            self._prepare_kernel()

    # -- compiled path -------------------------------------------------------

    def _prepare_kernel(self):
        cfg, p = self.cfg, self.params
        dummy2 = np.zeros((1, 1), dtype=p.P.dtype)

        def slot(state, name):
            arr = getattr(state, name)
            return dummy2 if arr is None else arr

        sP, sQ, sb = self.states["P"], self.states["Q"], self.states["b"]
        self._bias = p.item_bias if p.item_bias is not None else np.zeros(1, dtype=p.P.dtype)
        self._slots = (
            slot(sP, "m"), slot(sP, "v"), sP.t,
            slot(sQ, "m"), slot(sQ, "v"), sQ.t,
            slot(sb, "m"), slot(sb, "v"), sb.t,
        )
        w = cfg.telemetry_window
        self._tl = np.zeros(5, dtype=np.int64)
        self._buf = np.zeros((3 * w, 2), dtype=np.int64)
        self._pstamp = np.zeros(p.user_count, dtype=np.int64)
        self._qstamp = np.zeros(p.item_count, dtype=np.int64)
        self._status = np.zeros(4, dtype=np.int64)

    def _run_kernel(self, n: int, record: np.ndarray | None):
        cfg, p, o = self.cfg, self.params, self.cfg.optimizer
        lu, li, lj, lb = self.lam
        ad = self.adaptive
        orderings = ad.orderings if ad is not None else np.zeros((1, 1), dtype=np.int64)
        fstd = ad.factor_std if ad is not None else np.zeros(1)
        temp = ad.rank_temperature if ad is not None else 1.0
        tele_on = self.telemetry is not None
        cap = n // cfg.telemetry_window + 2 if tele_on else 1
        tele_iter = np.zeros(cap, dtype=np.int64)
        tele_val = np.zeros(cap)
        self._tl[_kernel.TL_N_OUT] = 0
        rec = record if record is not None else np.zeros((1, 3), dtype=np.int64)
        _kernel.seed_rng(int(self.sampler_rng.integers(2**31 - 1)))
        _kernel.run_triples(
            n, p.P, p.Q, self._bias, p.use_bias, self.hist.event_users, self.hist.event_items,
            self.hist.indptr, self.hist.indices,
            lu, li, lj, lb, o.code, o.learning_rate, o.beta, o.rho, o.beta1, o.beta2, o.eps,
            *self._slots,
            ad is not None, orderings, fstd, temp, cfg.retry_cap,
            tele_on, cfg.telemetry_window, self._tl, self._buf, self._pstamp, self._qstamp, tele_iter, tele_val,
            record is not None, rec, self._status,
        )
        if self._status[_kernel.ST_ERR]:
            table = ("P", "Q", "item_bias")[self._status[_kernel.ST_TABLE]]
            step = self.steps + int(self._status[_kernel.ST_STEP])
            row = int(self._status[_kernel.ST_ROW])
            raise NumericsError(
                f"non-finite {table}[{row}] after {o.kind} update at triple {step} "
                f"(lr={o.learning_rate}); try a smaller learning rate",
                row=row, step=step, table=table,
            )
        if tele_on:
            k = int(self._tl[_kernel.TL_N_OUT])
            self.telemetry.extend(tele_iter[:k], tele_val[:k])

    # -- reference path ------------------------------------------------------

    def _run_python(self, n: int, record: np.ndarray | None):
        p, o, rng = self.params, self.cfg.optimizer, self.sampler_rng
        reg = self.cfg.reg
        st = self.states
        for k in range(n):
            u, i = sample_positive(self.hist, rng)
            if self.adaptive is not None:
                j = sample_negative_adaptive(u, p, self.adaptive, self.hist, rng)
            else:
                j = sample_negative_uniform(u, self.hist, rng)
            if record is not None:
                record[k] = (u, i, j)
            self._apply_triple(u, i, j, reg, o, st)

    def _apply_triple(self, u, i, j, reg, o, st):
        p = self.params
        g = bpr_grad(p, u, i, j, reg)
        step = self.steps
        try:
            p.P[u] = apply_update(st["P"], u, p.P[u], g.g_pu, o)
            p.Q[i] = apply_update(st["Q"], i, p.Q[i], g.g_qi, o)
            p.Q[j] = apply_update(st["Q"], j, p.Q[j], g.g_qj, o)
            if p.item_bias is not None:
                p.item_bias[i] = apply_update(st["b"], i, p.item_bias[i:i + 1], [g.g_bi], o)[0]
                p.item_bias[j] = apply_update(st["b"], j, p.item_bias[j:j + 1], [g.g_bj], o)[0]
        except NumericsError as exc:
            raise NumericsError(f"{exc} (triple {step})", row=exc.row, step=step) from exc
        if self.telemetry is not None:
            self.telemetry.touch("P", u)
            self.telemetry.touch("Q", i)
            self.telemetry.touch("Q", j)
            record_momentum(st, self.telemetry, o.kind)
        self.steps += 1

    def replay(self, triples: np.ndarray):
        """Apply a fixed triple sequence with the reference update path."""
        for u, i, j in np.asarray(triples):
            self._apply_triple(int(u), int(i), int(j), self.cfg.reg, self.cfg.optimizer, self.states)

    # -- driver --------------------------------------------------------------

    def run(self, n_steps: int, record: np.ndarray | None = None):
        done = 0
        while done < n_steps:
            n = n_steps - done
            if self.adaptive is not None:
                n = min(n, self.adaptive.refresh_interval - self._since_refresh)
            rec = None if record is None else record[done:done + n]
            if self.cfg.backend == "numba":
                self._run_kernel(n, rec)
                self.steps += n
            else:
                self._run_python(n, rec)
            done += n
            if self.adaptive is not None:
                self._since_refresh += n
                if self._since_refresh >= self.adaptive.refresh_interval:
                    refresh_adaptive_state(self.params, self.adaptive)
                    self._since_refresh = 0

    def epoch(self):
        self.run(len(self.log))


def fit(
    train_log: InteractionLog,
    validation: EvalSplit | None,
    cfg: TrainConfig,
    *,
    validate: Callable[[ModelParams, int], float] | None = None,
    telemetry: MomentumTelemetry | None = None,
    name: str = "",
) -> tuple[ModelParams, RunRecord]:
    """Train on ``train_log``, early-stopping on ``validation``.

    ``validate(params, epoch)`` replaces the validation metric when given
    (scripted traces in tests).  Returns the parameters of the best evaluated
    epoch.
    """
    if validate is None:
        if validation is None or len(validation) == 0:
            raise ConfigError("training needs a non-empty validation split")

        def validate(params, epoch):
            return monitor_value(params, validation, cfg)

    t0 = time.perf_counter()
    if telemetry is None and cfg.telemetry:
        telemetry = MomentumTelemetry(window=cfg.telemetry_window)
    runner = _EpochRunner(train_log, cfg, telemetry)
    record = RunRecord(
        name=name or cfg.label(),
        config=cfg.to_dict(),
        seeds={"root": cfg.seed, "init": subseed(cfg.seed, "init"), "sampler": subseed(cfg.seed, "sampler")},
    )
    if cfg.sampler == "adaptive" and cfg.use_item_bias:
        record.flags.append("adaptive_sampling_with_item_bias")
    record.initial_metric = float(validate(runner.params, 0))
    stopper = EarlyStopping(cfg.patience)
    best = runner.params.copy()
    for epoch in range(1, cfg.max_epochs + 1):
        runner.epoch()
        record.epochs_run = epoch
        if epoch % cfg.eval_every and epoch != cfg.max_epochs:
            continue
        value = float(validate(runner.params, epoch))
        record.trace.append((epoch, value))
        stop = stopper.update(epoch, value)
        if stopper.best_epoch == epoch:
            best = runner.params.copy()
        logger.debug("%s epoch %d %s=%.5f", record.name, epoch, cfg.monitor, value)
        if stop:
            record.stopped_early = epoch < cfg.max_epochs
            break
    if stopper.best_epoch == 0:
        # nothing beat -inf (all NaN); keep the last parameters
        best = runner.params.copy()
    record.best_epoch = stopper.best_epoch
    record.best_metric = stopper.best if stopper.best_epoch else float("nan")
    record.wall_clock = time.perf_counter() - t0
    if telemetry is not None:
        record.flags.append(f"telemetry_windows={len(telemetry.values)}")
    return best, record


def train(bundle: SplitBundle, cfg: TrainConfig, *, evaluate_test: bool = False,
          telemetry: MomentumTelemetry | None = None, validate=None, name: str = "",
          checkpoint: Path | None = None) -> tuple[ModelParams, RunRecord]:
    params, record = fit(bundle.train, bundle.validation, cfg, validate=validate, telemetry=telemetry, name=name)
    if evaluate_test:
        rep = evaluate(params, bundle.test, ks=cfg.ks, with_auc=cfg.monitor == "auc")
        record.test_metrics = rep.aggregates
    if checkpoint is not None:
        save_checkpoint(params, checkpoint, {"run": record.name, "best_epoch": record.best_epoch,
                                             "best_metric": record.best_metric})
        record.checkpoint_path = str(checkpoint)
    return params, record


# ---------------------------------------------------------------------------
# hyperparameter search


@dataclass(frozen=True)
class LogUniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ConfigError(f"log-uniform needs 0 < lo < hi, got ({self.lo}, {self.hi})")

    def sample(self, rng):
        return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigError(f"uniform needs lo < hi, got ({self.lo}, {self.hi})")

    def sample(self, rng):
        return float(rng.uniform(self.lo, self.hi))


@dataclass(frozen=True)
class Categorical:
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ConfigError("categorical needs at least one value")

    def sample(self, rng):
        return self.values[int(rng.integers(len(self.values)))]


def parse_distribution(text: str):
    """``loguniform:1e-3:1e-1``, ``uniform:0:0.9``, ``choice:a,b,c`` or a fixed value."""
    kind, _, rest = text.strip().partition(":")
    kind = kind.lower()
    if kind == "loguniform":
        lo, hi = rest.split(":")
        return LogUniform(float(lo), float(hi))
    if kind == "uniform":
        lo, hi = rest.split(":")
        return Uniform(float(lo), float(hi))
    if kind in ("choice", "categorical"):
        return Categorical(tuple(_scalar(v) for v in rest.split(",")))
    return Categorical((_scalar(text.strip()),))


def _scalar(text: str):
    t = text.strip()
    if t.lower() in ("true", "on", "yes"):
        return True
    if t.lower() in ("false", "off", "no"):
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def default_space_params() -> dict:
    return {
        "learning_rate": LogUniform(1e-3, 0.3),
        "lam_u": LogUniform(1e-6, 1e-1),
        "lam_i": LogUniform(1e-6, 1e-1),
        "lam_j": LogUniform(1e-6, 1e-1),
        "lam": LogUniform(1e-6, 1e-1),
        "beta": Uniform(0.0, 0.9),
        "beta1": Uniform(0.0, 0.9),
    }


@dataclass
class SearchSpace:
    params: dict = field(default_factory=default_space_params)
    budget: int = 20
    stage1_epochs: int = 70
    stage2_epochs: int = 1000
    inner_heldout_users: int | None = None

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigError("search budget must be >= 1")
        if self.stage1_epochs < 1 or self.stage2_epochs < 1:
            raise ConfigError("stage epochs must be >= 1")

    def relevant(self, cfg: TrainConfig) -> dict:
        """Drop hyperparameters that the configuration's features do not use."""
        variant = cfg.reg.variant
        kind = cfg.optimizer.kind
        wanted = {
            "lam": variant == "shared",
            "lam_u": variant in ("user_item", "separate"),
            "lam_i": variant in ("user_item", "separate"),
            "lam_j": variant == "separate",
            "lam_b": cfg.use_item_bias and variant != "none",
            "beta": kind == "momentum_sgd",
            "beta1": kind == "adam",
            "beta2": kind == "adam",
            "rho": kind == "rmsprop",
            "rank_temperature": cfg.sampler == "adaptive",
        }
        return {k: v for k, v in self.params.items() if wanted.get(k, True)}

    def sample(self, cfg: TrainConfig, rng: np.random.Generator) -> TrainConfig:
        drawn = {}
        # categorical feature switches first, they decide which numeric ones apply
        for k, dist in self.params.items():
            if isinstance(dist, Categorical) and k in ("reg_variant", "optimizer", "sampler", "use_item_bias"):
                drawn[k] = dist.sample(rng)
        base = with_overrides(cfg, drawn)
        for k, dist in self.relevant(base).items():
            if k not in drawn:
                drawn[k] = dist.sample(rng)
        return with_overrides(cfg, drawn)


def inner_bundle(bundle: SplitBundle, space: SearchSpace, seed: int) -> SplitBundle:
    """Train/validation split carved out of ``bundle.train`` with the outer protocol."""
    log = bundle.train
    try:
        if bundle.protocol_tag == "user-based" and space.inner_heldout_users:
            from .data import split_user_based

            return split_user_based(log, space.inner_heldout_users, bundle.params["fold_in_fraction"], seed)
        return bundle.resplit(log, seed=seed)
    except (SplitError, KeyError) as exc:
        raise SearchError(f"inner split infeasible: {exc}") from exc


def run_trials(inner: SplitBundle, base: TrainConfig, space: SearchSpace, rng: np.random.Generator,
               name: str = "trial", on_record=None) -> list[RunRecord]:
    trials = []
    for n in range(space.budget):
        cfg = replace(space.sample(base, rng), max_epochs=space.stage1_epochs)
        try:
            _, rec = fit(inner.train, inner.validation, cfg, name=f"{name}-{n}")
        except (NumericsError, NoNegativeAvailable) as exc:
            rec = RunRecord(name=f"{name}-{n}", config=cfg.to_dict(), status="failed", error=str(exc))
        rec.stage = "trial"
        trials.append(rec)
        if on_record is not None:
            on_record(rec)
    return trials


def best_trial(trials: Sequence[RunRecord]) -> RunRecord:
    ok = [t for t in trials if t.status == "ok" and not math.isnan(t.best_metric)]
    if not ok:
        raise SearchError("every search trial failed")
    best = ok[0]
    for t in ok[1:]:
        if t.best_metric > best.best_metric:
            best = t
    return best


def hyperparameter_search(bundle: SplitBundle, space: SearchSpace, rng: np.random.Generator | int,
                          base: TrainConfig | None = None, name: str = "search",
                          on_record=None, checkpoint: Path | None = None) -> RunRecord:
    """Random search on an inner split of ``bundle.train``, then a long retrain.

    The best stage-one configuration is retrained on ``bundle.train`` for
    ``stage2_epochs`` (early stopping on ``bundle.validation``) and evaluated
    once on ``bundle.test``.
    """
    base = base or TrainConfig()
    if not isinstance(rng, np.random.Generator):
        rng = substream(int(rng), "search")
    inner = inner_bundle(bundle, space, int(rng.integers(2**31 - 1)))
    trials = run_trials(inner, base, space, rng, name=f"{name}/trial", on_record=on_record)
    winner = best_trial(trials)
    cfg = replace(TrainConfig.from_dict(winner.config), max_epochs=space.stage2_epochs)
    params, final = fit(bundle.train, bundle.validation, cfg, name=f"{name}/retrain")
    final.stage = "retrain"
    final.test_metrics = evaluate(params, bundle.test, ks=cfg.ks, with_auc=cfg.monitor == "auc").aggregates
    if checkpoint is not None:
        save_checkpoint(params, checkpoint, {"run": final.name})
        final.checkpoint_path = str(checkpoint)
    final.trials = trials
    if on_record is not None:
        on_record(final)
    return final


# ---------------------------------------------------------------------------
# sequential ablation


@dataclass(frozen=True)
class AblationGrid:
    biases: tuple[bool, ...] = (True, False)
    regs: tuple[str, ...] = ("separate", "user_item", "shared", "none")
    optimizers: tuple[str, ...] = ("sgd", "momentum_sgd", "rmsprop", "adam")
    samplers: tuple[str, ...] = ("uniform", "adaptive")

    def __post_init__(self):
        if not (self.biases and self.regs and self.optimizers and self.samplers):
            raise ConfigError("every ablation axis needs at least one value")
        for r in self.regs:
            if r not in REG_VARIANTS:
                raise ConfigError(f"unknown regularization {r!r}")
        for o in self.optimizers:
            if o not in OPTIMIZERS:
                raise ConfigError(f"unknown optimizer {o!r}")
        for s in self.samplers:
            if s not in SAMPLERS:
                raise ConfigError(f"unknown sampler {s!r}")

    def subset1(self, base: TrainConfig) -> list[tuple[str, TrainConfig]]:
        base = with_overrides(base, {"optimizer": self.optimizers[0], "sampler": self.samplers[0]})
        out = []
        for b in self.biases:
            for r in self.regs:
                cfg = with_overrides(base, {"use_item_bias": b, "reg_variant": r})
                out.append((f"s1/bias={'on' if b else 'off'}/reg={r}", cfg))
        return out

    def planned_size(self) -> int:
        return len(self.biases) * len(self.regs) + len(self.optimizers) + len(self.samplers)


def _cell_key(stage: str, cfg: TrainConfig) -> str:
    return f"{stage}|{cfg.label()}"


def run_ablation_grid(
    bundle: SplitBundle,
    base: TrainConfig | None = None,
    grid: AblationGrid | None = None,
    space: SearchSpace | None = None,
    seed: int = 0,
    completed: dict[str, RunRecord] | None = None,
    on_record=None,
) -> list[RunRecord]:
    """Bias x regularization, then optimizers on the winner, then samplers on that winner.

    Each cell is a plain training run (``space=None``) or a full two-stage
    search.  Winners are chosen by the best validation value of the monitor.
    A failing cell is recorded and the grid continues.  Cells listed in
    ``completed`` (keyed by stage and feature label) are not re-run.
    """
    base = base or TrainConfig()
    grid = grid or AblationGrid()
    completed = dict(completed or {})
    records: list[RunRecord] = []

    executed: dict[str, RunRecord] = {}

    def run_cell(name: str, stage: str, cfg: TrainConfig) -> RunRecord:
        key = _cell_key(stage, cfg)
        same = json.dumps(cfg.to_dict(), sort_keys=True, default=_json_default)
        if key in completed:
            rec = completed[key]
        elif same in executed:
            # identical configuration already ran in an earlier subset
            rec = RunRecord.from_dict(executed[same].to_dict())
            rec.name = name
            rec.flags = [*rec.flags, f"reused={executed[same].name}"]
            rec.stage = stage
            if on_record is not None:
                on_record(key, rec)
        else:
            try:
                if space is None:
                    _, rec = train(bundle, cfg, evaluate_test=True, name=name)
                else:
                    rec = hyperparameter_search(bundle, space, substream(seed, "search", len(records)), cfg, name=name)
            except BPRLabError as exc:
                rec = RunRecord(name=name, config=cfg.to_dict(), status="failed", error=f"{type(exc).__name__}: {exc}")
            rec.stage = stage
            if on_record is not None:
                on_record(key, rec)
        if rec.status == "ok":
            executed.setdefault(same, rec)
        records.append(rec)
        return rec

    def winner(cells: list[tuple[RunRecord, TrainConfig]]) -> TrainConfig:
        ok = [(r, c) for r, c in cells if r.status == "ok" and not math.isnan(r.best_metric)]
        if not ok:
            raise SearchError("every cell of an ablation subset failed")
        best_r, best_c = ok[0]
        for r, c in ok[1:]:
            if r.best_metric > best_r.best_metric:
                best_r, best_c = r, c
        if space is not None:
            # carry the searched hyperparameters of the winner forward
            return TrainConfig.from_dict(best_r.config)
        return best_c

    s1 = [(run_cell(n, "s1", c), c) for n, c in grid.subset1(base)]
    w1 = winner(s1)
    s2 = []
    for opt in grid.optimizers:
        cfg = with_overrides(w1, {"optimizer": opt})
        s2.append((run_cell(f"s2/opt={opt}", "s2", cfg), cfg))
    w2 = winner(s2)
    for smp in grid.samplers:
        cfg = with_overrides(w2, {"sampler": smp})
        run_cell(f"s3/sampler={smp}", "s3", cfg)
    return records


def cell_key(record: RunRecord) -> str:
    return _cell_key(record.stage, TrainConfig.from_dict(record.config))
