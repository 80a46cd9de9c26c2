"""Stratified k-fold grid search over GbdtParams candidates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from .gbdt import GbdtParams, train_gbdt
from .metrics import classification_metrics

SCORE_TOL = 1e-12


def stratified_folds(labels, k_folds, seed=0):
    """Fold id per row: each class is shuffled and dealt round-robin into k folds."""
    y = np.asarray(labels)
    if k_folds < 2:
        raise ConfigError("k_folds must be >= 2")
    rng = np.random.default_rng(seed)
    folds = np.empty(y.size, dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if idx.size < k_folds:
            raise DataError(f"class {cls} has {idx.size} rows, fewer than {k_folds} folds")
        folds[rng.permutation(idx)] = np.arange(idx.size) % k_folds
    return folds


@dataclass
class GridSearchResult:
    best: GbdtParams
    scores: list  # mean F1 per candidate, grid order
    fold_scores: list = field(default_factory=list)

    def as_dict(self):
        return {"best": asdict(self.best), "mean_f1": list(self.scores)}


def grid_search(features, labels, grid, k_folds=3, seed=0) -> GridSearchResult:
    """Pick the candidate with the highest mean out-of-fold F1.

    Scores within ``SCORE_TOL`` count as tied; ties go to fewer
    n_estimators, then smaller max_depth, then earlier grid position. An
    undefined fold F1 counts as 0.
    """
    grid = list(grid)
    if not grid:
        raise ConfigError("detector grid is empty")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    folds = stratified_folds(y, k_folds, seed)
    means, per_fold = [], []
    for params in grid:
        scores = []
        for f in range(k_folds):
            train, held = folds != f, folds == f
            model = train_gbdt(X[train], y[train], params)
            f1 = classification_metrics(model.predict(X[held]), y[held]).f1
            scores.append(0.0 if math.isnan(f1) else f1)
        per_fold.append(scores)
        means.append(float(np.mean(scores)))
    top = max(means)
    tied = [i for i, s in enumerate(means) if s >= top - SCORE_TOL]
    best = min(tied, key=lambda i: (grid[i].n_estimators, grid[i].max_depth, i))
    return GridSearchResult(grid[best], means, per_fold)
