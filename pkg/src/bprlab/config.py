"""Experiment configuration: INI-style file, ``section.key=value`` overrides, defaults."""
from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .data import YEAR_SECONDS, LogFormat
from .errors import ConfigError
from .model import InitSpec
from .objective import RegScheme
from .optim import OptimizerConfig
from .train import AblationGrid, SearchSpace, TrainConfig, parse_distribution

OUTPUT_ENV = "BPRLAB_OUTPUT"

DEFAULTS: dict[str, dict[str, str]] = {
    "data": {
        "path": "",
        "delimiter": "\\t",
        "columns": "user,item,rating,timestamp",
        "header": "false",
        "min_rating": "",
        "min_user": "1",
        "min_item": "1",
        "subsample_events": "",
        "synthetic_users": "943",
        "synthetic_items": "1682",
    },
    "split": {
        "protocol": "user-based",
        "n_heldout_users": "100",
        "fold_in_fraction": "0.8",
        "test_window_years": "3",
        "val_window_years": "1",
    },
    "model": {"f": "64", "use_item_bias": "false", "init_std": "0.01", "dtype": "float64"},
    "train": {
        "reg": "separate",
        "lam": "0.0",
        "lam_u": "0.0",
        "lam_i": "0.0",
        "lam_j": "0.0",
        "lam_b": "",
        "optimizer": "sgd",
        "learning_rate": "0.05",
        "beta": "0.9",
        "rho": "0.9",
        "beta1": "0.9",
        "beta2": "0.999",
        "eps": "1e-8",
        "sampler": "uniform",
        "rank_temperature": "",
        "refresh_interval": "",
        "max_epochs": "70",
        "patience": "13",
        "eval_every": "1",
        "monitor": "ndcg@100",
        "telemetry": "false",
        "backend": "numba",
    },
    "eval": {"ks": "5,10,100", "metrics": "ndcg,recall"},
    "search": {"budget": "20", "stage1_epochs": "70", "stage2_epochs": "1000", "inner_heldout_users": ""},
    "ablation": {
        "biases": "on,off",
        "regs": "separate,user_item,shared,none",
        "optimizers": "sgd,momentum_sgd,rmsprop,adam",
        "samplers": "uniform,adaptive",
        "search": "false",
    },
    "output": {"dir": ""},
    "run": {"seed": "0"},
}

_SEARCH_RESERVED = {"budget", "stage1_epochs", "stage2_epochs", "inner_heldout_users"}


def _bool(text: str, key: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _num(text: str, key: str, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {text!r}") from None


def _opt(text: str, key: str, kind=float):
    return None if text.strip() == "" else _num(text, key, kind)


@dataclass
class ExperimentConfig:
    raw: dict
    source: Path | None = None
    format: LogFormat = field(default_factory=LogFormat)

    # -- construction --------------------------------------------------------

    @classmethod
    def load(cls, path=None, overrides=(), require_data: bool = False) -> "ExperimentConfig":
        raw = {s: dict(v) for s, v in DEFAULTS.items()}
        source = None
        if path is not None:
            source = Path(path)
            if not source.exists():
                raise ConfigError(f"config file {source} does not exist")
            cp = configparser.ConfigParser(interpolation=None)
            cp.optionxform = str
            try:
                cp.read(source)
            except configparser.Error as exc:
                raise ConfigError(f"{source}: {exc}") from exc
            for section in cp.sections():
                if section not in raw:
                    raise ConfigError(f"{source}: unknown section [{section}]")
                for k, v in cp.items(section):
                    cls._check_key(section, k)
                    raw[section][k] = v
        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override {item!r} is not section.key=value")
            key, value = item.split("=", 1)
            section, k = key.strip().split(".", 1)
            if section not in raw:
                raise ConfigError(f"override {item!r}: unknown section {section!r}")
            cls._check_key(section, k)
            raw[section][k] = value.strip()
        cfg = cls(raw, source)
        cfg.validate(require_data=require_data)
        return cfg

    @staticmethod
    def _check_key(section: str, key: str):
        if section == "search" and key not in _SEARCH_RESERVED:
            return
        if key not in DEFAULTS[section]:
            raise ConfigError(f"unknown key {section}.{key}")

    def get(self, section: str, key: str) -> str:
        return self.raw[section][key]

    # -- typed views ---------------------------------------------------------

    @property
    def seed(self) -> int:
        return _num(self.get("run", "seed"), "run.seed", int)

    @property
    def output_dir(self) -> Path:
        d = self.get("output", "dir").strip()
        if d:
            return Path(d)
        return Path(os.environ.get(OUTPUT_ENV, "runs"))

    @property
    def data_path(self) -> Path | None:
        p = self.get("data", "path").strip()
        return Path(p) if p else None

    def log_format(self) -> LogFormat:
        delim = self.get("data", "delimiter").encode().decode("unicode_escape")
        cols = tuple(c.strip() for c in self.get("data", "columns").split(","))
        return LogFormat(
            delimiter=delim,
            columns=cols,
            header=_bool(self.get("data", "header"), "data.header"),
            min_rating=_opt(self.get("data", "min_rating"), "data.min_rating"),
        )

    @property
    def ks(self) -> tuple[int, ...]:
        try:
            ks = tuple(sorted(int(k) for k in self.get("eval", "ks").split(",") if k.strip()))
        except ValueError:
            raise ConfigError(f"eval.ks must be integers, got {self.get('eval', 'ks')!r}") from None
        if not ks or min(ks) < 1:
            raise ConfigError("eval.ks needs positive integers")
        return ks

    @property
    def metrics(self) -> tuple[str, ...]:
        ms = tuple(m.strip() for m in self.get("eval", "metrics").split(",") if m.strip())
        bad = set(ms) - {"ndcg", "recall", "auc"}
        if bad:
            raise ConfigError(f"eval.metrics: unknown metrics {sorted(bad)}")
        return ms

    def train_config(self) -> TrainConfig:
        t, m = self.raw["train"], self.raw["model"]
        reg = RegScheme(
            variant=t["reg"],
            lam=_num(t["lam"], "train.lam"),
            lam_u=_num(t["lam_u"], "train.lam_u"),
            lam_i=_num(t["lam_i"], "train.lam_i"),
            lam_j=_num(t["lam_j"], "train.lam_j"),
            lam_b=_opt(t["lam_b"], "train.lam_b"),
        )
        opt = OptimizerConfig(
            kind=t["optimizer"],
            learning_rate=_num(t["learning_rate"], "train.learning_rate"),
            beta=_num(t["beta"], "train.beta"),
            rho=_num(t["rho"], "train.rho"),
            beta1=_num(t["beta1"], "train.beta1"),
            beta2=_num(t["beta2"], "train.beta2"),
            eps=_num(t["eps"], "train.eps"),
        )
        return TrainConfig(
            f=_num(m["f"], "model.f", int),
            use_item_bias=_bool(m["use_item_bias"], "model.use_item_bias"),
            reg=reg,
            optimizer=opt,
            sampler=t["sampler"],
            rank_temperature=_opt(t["rank_temperature"], "train.rank_temperature"),
            refresh_interval=_opt(t["refresh_interval"], "train.refresh_interval", int),
            max_epochs=_num(t["max_epochs"], "train.max_epochs", int),
            patience=_num(t["patience"], "train.patience", int),
            eval_every=_num(t["eval_every"], "train.eval_every", int),
            monitor=t["monitor"],
            ks=self.ks,
            init=InitSpec(std=_num(m["init_std"], "model.init_std")),
            dtype=m["dtype"],
            seed=self.seed,
            telemetry=_bool(t["telemetry"], "train.telemetry"),
            backend=t["backend"],
        )

    def search_space(self) -> SearchSpace:
        s = self.raw["search"]
        dists = {k: parse_distribution(v) for k, v in s.items() if k not in _SEARCH_RESERVED}
        kwargs = {}
        if dists:
            kwargs["params"] = dists
        try:
            return SearchSpace(
                budget=_num(s["budget"], "search.budget", int),
                stage1_epochs=_num(s["stage1_epochs"], "search.stage1_epochs", int),
                stage2_epochs=_num(s["stage2_epochs"], "search.stage2_epochs", int),
                inner_heldout_users=_opt(s["inner_heldout_users"], "search.inner_heldout_users", int),
                **kwargs,
            )
        except ValueError as exc:
            raise ConfigError(f"[search]: {exc}") from exc

    def ablation_grid(self) -> AblationGrid:
        a = self.raw["ablation"]

        def items(key):
            return tuple(x.strip() for x in a[key].split(",") if x.strip())

        biases = tuple(_bool(x, "ablation.biases") for x in items("biases"))
        return AblationGrid(biases=biases, regs=items("regs"), optimizers=items("optimizers"), samplers=items("samplers"))

    @property
    def ablation_search(self) -> bool:
        return _bool(self.raw["ablation"]["search"], "ablation.search")

    def split_params(self) -> dict:
        s = self.raw["split"]
        protocol = s["protocol"]
        if protocol == "user-based":
            return {
                "protocol": protocol,
                "n_heldout_users": _num(s["n_heldout_users"], "split.n_heldout_users", int),
                "fold_in_fraction": _num(s["fold_in_fraction"], "split.fold_in_fraction"),
            }
        if protocol == "temporal":
            return {
                "protocol": protocol,
                "test_window": int(round(_num(s["test_window_years"], "split.test_window_years") * YEAR_SECONDS)),
                "val_window": int(round(_num(s["val_window_years"], "split.val_window_years") * YEAR_SECONDS)),
            }
        raise ConfigError(f"split.protocol must be user-based or temporal, got {protocol!r}")

    # -- validation ----------------------------------------------------------

    def validate(self, require_data: bool = False) -> None:
        p = self.data_path
        if p is not None and not p.exists():
            raise ConfigError(f"data.path {p} does not exist")
        if require_data and p is None and not self.raw["data"]["synthetic_users"].strip():
            raise ConfigError("data.path is required")
        self.format = self.log_format()
        for k in ("min_user", "min_item"):
            if _num(self.get("data", k), f"data.{k}", int) < 1:
                raise ConfigError(f"data.{k} must be >= 1")
        self.split_params()
        cfg = self.train_config()
        metrics = self.metrics
        mon = cfg.monitor.split("@")[0]
        if mon not in metrics:
            raise ConfigError(f"train.monitor {cfg.monitor} is not among eval.metrics {metrics}")
        self.search_space()
        self.ablation_grid()

    # -- provenance ----------------------------------------------------------

    def canonical(self) -> dict:
        return {s: dict(sorted(v.items())) for s, v in sorted(self.raw.items()) if s != "output"}

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.canonical(), sort_keys=True).encode()).hexdigest()


def content_hash(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(Path(x) for x in paths):
        h.update(p.name.encode())
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()

