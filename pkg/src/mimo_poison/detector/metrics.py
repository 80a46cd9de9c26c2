from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class ClassificationMetrics:
    precision: float  # nan when nothing was predicted positive
    recall: float  # nan when there are no positive labels
    f1: float  # nan when undefined
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def confusion(self):
        return (self.tp, self.fp, self.fn, self.tn)

    def as_dict(self):
        def clean(v):
            return None if math.isnan(v) else v

        return {
            "precision": clean(self.precision),
            "recall": clean(self.recall),
            "f1": clean(self.f1),
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
        }


def classification_metrics(predicted, truth) -> ClassificationMetrics:
    """Precision/recall/F1 for the positive class (1 = poisoned)."""
    p = np.asarray(predicted).astype(np.int64)
    t = np.asarray(truth).astype(np.int64)
    if p.shape != t.shape or p.size == 0:
        raise DataError("predicted and true labels must have equal non-zero length")
    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    tn = int(np.sum((p == 0) & (t == 0)))
    precision = tp / (tp + fp) if tp + fp else math.nan
    recall = tp / (tp + fn) if tp + fn else math.nan
    if math.isnan(precision) or math.isnan(recall):
        f1 = math.nan
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return ClassificationMetrics(precision, recall, f1, tp, fp, fn, tn)
