"""Figures for momentum telemetry and ablation records, written next to CSV tables."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .optim import MomentumTelemetry  # noqa: E402
from .train import RunRecord  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 3.6),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def plot_momentum(series: dict[str, MomentumTelemetry], path, max_iteration: int | None = None) -> Path:
    """Mean |first moment| per telemetry window, one line per labelled run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, tel in series.items():
            it, val = tel.iterations, tel.values
            if max_iteration is not None:
                keep = [n for n, x in enumerate(it) if x <= max_iteration]
                it, val = [it[n] for n in keep], [val[n] for n in keep]
            ax.plot(it, val, lw=1.0, label=label)
        ax.set_xlabel("training iteration (triples)")
        ax.set_ylabel("mean |m|")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def ablation_table(records: Sequence[RunRecord], path, metrics: Sequence[str] = ()) -> Path:
    path = Path(path)
    metrics = list(metrics) or sorted({m for r in records for m in r.test_metrics})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "name", "status", "best_epoch", "best_validation"] + metrics)
        for r in records:
            w.writerow(
                [r.stage, r.name, r.status, r.best_epoch, r.best_metric]
                + [r.test_metrics.get(m, "") for m in metrics]
            )
    return path


def plot_ablation(records: Sequence[RunRecord], path, metric: str = "ndcg@100") -> Path:
    """Horizontal bars of a test metric per cell, grouped by ablation stage."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ok = [r for r in records if r.status == "ok" and metric in r.test_metrics]
    stages = sorted({r.stage for r in ok})
    colors = dict(zip(stages, plt.rcParams["axes.prop_cycle"].by_key()["color"]))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 0.3 * max(len(ok), 3) + 1.0))
        ys = range(len(ok))
        ax.barh(list(ys), [r.test_metrics[metric] for r in ok], color=[colors[r.stage] for r in ok])
        ax.set_yticks(list(ys))
        ax.set_yticklabels([r.name for r in ok])
        ax.invert_yaxis()
        ax.set_xlabel(metric)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
