"""Proximity applications: imputation, outlier scores, MDS embedding."""

from .impute import ImputationRunResult, impute, impute_kinds
from .mds import Embedding, mds_embed
from .outliers import OutlierResult, outlier_scores

__all__ = [
    "Embedding",
    "ImputationRunResult",
    "OutlierResult",
    "impute",
    "impute_kinds",
    "mds_embed",
    "outlier_scores",
]
