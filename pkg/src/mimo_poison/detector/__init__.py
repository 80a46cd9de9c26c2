"""Poison detection: boosted trees, a logistic baseline and classification metrics."""

from .gbdt import Binner, GbdtModel, GbdtParams, Tree, predict_proba, train_gbdt
from .logistic import LogisticModel, train_logistic_baseline
from .metrics import ClassificationMetrics, classification_metrics
from .search import GridSearchResult, grid_search, stratified_folds

__all__ = [
    "Binner", "GbdtModel", "GbdtParams", "Tree", "predict_proba", "train_gbdt",
    "LogisticModel", "train_logistic_baseline",
    "ClassificationMetrics", "classification_metrics",
    "GridSearchResult", "grid_search", "stratified_folds",
]
