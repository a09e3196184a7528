"""Matrix factorization parameters, scoring and checkpoints."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

CHECKPOINT_MAGIC = b"BPRM"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIQQBB")  # magic, version, f, users, items, has_bias, dtype code
_DTYPES = {0: np.float64, 1: np.float32}


@dataclass(frozen=True)
class InitSpec:
    distribution: str = "normal"
    mean: float = 0.0
    std: float = 0.01
    lo: float = -0.01
    hi: float = 0.01
    seed: int = 0
    bias_init: float = 0.0

    def __post_init__(self):
        if self.distribution == "normal":
            if not self.std > 0:
                raise ConfigError(f"normal init needs std > 0, got {self.std}")
        elif self.distribution == "uniform":
            if not self.lo < self.hi:
                raise ConfigError(f"uniform init needs lo < hi, got [{self.lo}, {self.hi}]")
        else:
            raise ConfigError(f"unknown init distribution {self.distribution!r}")


@dataclass(eq=False)
class ModelParams:
    P: np.ndarray
    Q: np.ndarray
    item_bias: np.ndarray | None = None

    @property
    def f(self) -> int:
        return self.P.shape[1]

    @property
    def user_count(self) -> int:
        return self.P.shape[0]

    @property
    def item_count(self) -> int:
        return self.Q.shape[0]

    @property
    def use_bias(self) -> bool:
        return self.item_bias is not None

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.P.copy(), self.Q.copy(), None if self.item_bias is None else self.item_bias.copy()
        )

    def is_finite(self) -> bool:
        ok = np.isfinite(self.P).all() and np.isfinite(self.Q).all()
        if self.item_bias is not None:
            ok = ok and np.isfinite(self.item_bias).all()
        return bool(ok)

    def scores(self, users, fold_in=None) -> np.ndarray:
        """Score matrix for a batch of users; ``fold_in`` is unused (users are known)."""
        out = self.P[users] @ self.Q.T
        if self.item_bias is not None:
            out += self.item_bias
        return out


def init(user_count: int, item_count: int, f: int, spec: InitSpec | None = None,
         use_bias: bool = False, dtype=np.float64) -> ModelParams:
    if f < 1:
        raise ConfigError(f"embedding dimension must be >= 1, got {f}")
    spec = spec or InitSpec()
    rng = np.random.default_rng(spec.seed)
    if spec.distribution == "normal":
        P = rng.normal(spec.mean, spec.std, size=(user_count, f))
        Q = rng.normal(spec.mean, spec.std, size=(item_count, f))
    else:
        P = rng.uniform(spec.lo, spec.hi, size=(user_count, f))
        Q = rng.uniform(spec.lo, spec.hi, size=(item_count, f))
    b = np.full(item_count, spec.bias_init, dtype=dtype) if use_bias else None
    return ModelParams(P.astype(dtype), Q.astype(dtype), b)


def score(params: ModelParams, u: int, i: int) -> float:
    if not (0 <= u < params.user_count and 0 <= i < params.item_count):
        raise IndexError(f"(user={u}, item={i}) outside {params.user_count} x {params.item_count}")
    s = params.P[u] @ params.Q[i]
    if params.item_bias is not None:
        s = s + params.item_bias[i]
    return float(s)


def score_all_items(params: ModelParams, u: int) -> np.ndarray:
    if not 0 <= u < params.user_count:
        raise IndexError(f"user {u} outside [0, {params.user_count})")
    # row-by-row dot keeps the reduction order identical to score()
    v = np.array([params.P[u] @ q for q in params.Q], dtype=params.Q.dtype)
    if params.item_bias is not None:
        v = v + params.item_bias
    return v


def save_checkpoint(params: ModelParams, path, metadata: dict | None = None) -> Path:
    """Binary checkpoint (header + row-major P, Q, b) with a JSON metadata twin."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dtype_code = 1 if params.P.dtype == np.float32 else 0
    dt = np.dtype(_DTYPES[dtype_code]).newbyteorder("<")
    header = _HEADER.pack(
        CHECKPOINT_MAGIC, CHECKPOINT_VERSION, params.f, params.user_count, params.item_count,
        int(params.use_bias), dtype_code,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(params.P, dtype=dt).tobytes())
        fh.write(np.ascontiguousarray(params.Q, dtype=dt).tobytes())
        if params.item_bias is not None:
            fh.write(np.ascontiguousarray(params.item_bias, dtype=dt).tobytes())
    meta = {
        "format": "bprlab-checkpoint",
        "version": CHECKPOINT_VERSION,
        "f": params.f,
        "user_count": params.user_count,
        "item_count": params.item_count,
        "item_bias": params.use_bias,
        "dtype": np.dtype(_DTYPES[dtype_code]).name,
    }
    meta.update(metadata or {})
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return path


def load_checkpoint(path) -> ModelParams:
    raw = Path(path).read_bytes()
    magic, version, f, nu, ni, has_bias, dtype_code = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    dt = np.dtype(_DTYPES[dtype_code]).newbyteorder("<")
    off = _HEADER.size
    expected = off + dt.itemsize * (nu * f + ni * f + (ni if has_bias else 0))
    if len(raw) != expected:
        raise ConfigError(f"{path}: truncated checkpoint ({len(raw)} of {expected} bytes)")
    P = np.frombuffer(raw, dtype=dt, count=nu * f, offset=off).reshape(nu, f)
    off += P.nbytes
    Q = np.frombuffer(raw, dtype=dt, count=ni * f, offset=off).reshape(ni, f)
    off += Q.nbytes
    b = np.frombuffer(raw, dtype=dt, count=ni, offset=off).copy() if has_bias else None
    native = _DTYPES[dtype_code]
    return ModelParams(P.astype(native), Q.astype(native), None if b is None else b.astype(native))
