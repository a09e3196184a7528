"""Paired two-sided t-test over per-user metric values with Bonferroni correction."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from ..errors import AlignmentError, ConfigError
from .metrics import MetricsReport


@dataclass(frozen=True)
class PairedTest:
    metric: str
    t: float
    df: int
    p_raw: float
    p_adjusted: float
    significant: bool
    mean_diff: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "t": self.t,
            "df": self.df,
            "p_raw": self.p_raw,
            "p_adjusted": self.p_adjusted,
            "significant": self.significant,
            "mean_diff": self.mean_diff,
            "degenerate": self.degenerate,
        }


def student_t_two_sided_p(t: float, df: int) -> float:
    """``P(|T| >= |t|)`` for Student's t with ``df`` degrees of freedom.

    Uses ``I_{df / (df + t^2)}(df / 2, 1 / 2)``, the regularized incomplete beta.
    """
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def paired_t_test(a, b, comparisons: int = 1, alpha: float = 0.05, metric: str = "") -> PairedTest:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise AlignmentError("paired samples have different lengths")
    if len(a) < 2:
        raise ConfigError("paired t-test needs at least two users")
    if comparisons < 1:
        raise ConfigError("comparisons must be >= 1")
    d = a - b
    n = len(d)
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    degenerate = False
    if sd == 0.0:
        if mean == 0.0:
            t, p = 0.0, 1.0
        else:
            degenerate = True
            warnings.warn(f"{metric or 'metric'}: constant non-zero differences; t is infinite", RuntimeWarning)
            t, p = math.copysign(math.inf, mean), 0.0
    else:
        t = mean / (sd / math.sqrt(n))
        p = student_t_two_sided_p(t, n - 1)
    p_adj = min(1.0, p * comparisons)
    return PairedTest(metric, t, n - 1, p, p_adj, p_adj < alpha, mean, degenerate)


def paired_significance(a: MetricsReport, b: MetricsReport, comparisons: int,
                        alpha: float = 0.05) -> dict[str, PairedTest]:
    """Per-metric paired tests of ``a`` against ``b`` over their shared users."""
    if not np.array_equal(a.users, b.users):
        raise AlignmentError(
            f"reports {a.name!r} and {b.name!r} are not aligned on the same users "
            f"({len(a.users)} vs {len(b.users)})"
        )
    shared = [m for m in a.per_user if m in b.per_user]
    return {m: paired_t_test(a.per_user[m], b.per_user[m], comparisons, alpha, m) for m in shared}


def significance_matrix(reports: list[MetricsReport], comparisons: int | None = None,
                        alpha: float = 0.05) -> dict:
    """Paired tests of ``reports[0]`` against every other report, as JSON-ready dicts.

    ``comparisons`` defaults to the number of pairs tested against the first
    report.
    """
    base, others = reports[0], reports[1:]
    comparisons = comparisons or max(1, len(others))
    out = {"reference": base.name, "comparisons": comparisons, "alpha": alpha, "results": {}}
    for other in others:
        res = paired_significance(base, other, comparisons, alpha)
        out["results"][other.name] = {m: r.to_dict() for m, r in res.items()}
    return out
