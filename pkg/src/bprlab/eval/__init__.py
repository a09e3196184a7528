from .baselines import EaseModel, ItemPopModel, fit_ease, fit_itempop
from .metrics import (
    DEFAULT_KS,
    MetricsReport,
    auc,
    auc_from_scores,
    evaluate,
    metric_names,
    ndcg_at_k,
    rank_topn,
    recall_at_k,
)
from .significance import PairedTest, paired_significance, paired_t_test, significance_matrix

__all__ = [
    "DEFAULT_KS",
    "EaseModel",
    "ItemPopModel",
    "MetricsReport",
    "PairedTest",
    "auc",
    "auc_from_scores",
    "evaluate",
    "fit_ease",
    "fit_itempop",
    "metric_names",
    "ndcg_at_k",
    "paired_significance",
    "paired_t_test",
    "rank_topn",
    "recall_at_k",
    "significance_matrix",
]
