"""Matrix factorization trained with the BPR pairwise criterion, plus the
splits, metrics, baselines and experiment drivers around it."""

__version__ = "0.1.0"
