"""Logistic-regression baseline trained by full-batch gradient descent."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, SingleClassError
from .gbdt import _sigmoid, logistic_loss


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    mean: np.ndarray
    std: np.ndarray
    threshold: float = 0.5
    loss_trace: list = field(default_factory=list)

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.weights.size:
            raise DataError(f"expected {self.weights.size} features, got {X.shape[1]}")
        return ((X - self.mean) / self.std) @ self.weights + self.bias

    def predict_proba(self, X):
        return _sigmoid(self.decision_function(X))

    def predict(self, X):
        return (self.predict_proba(X) >= self.threshold).astype(np.int64)

    def to_dict(self):
        return {"kind": "logistic", "weights": self.weights.tolist(), "bias": self.bias,
                "mean": self.mean.tolist(), "std": self.std.tolist(), "threshold": self.threshold}


def train_logistic_baseline(features, labels, iterations=500, step=0.5) -> LogisticModel:
    """Batch gradient descent on the mean logistic loss over z-scored features.

    The bias starts at the base-rate logit, so zero iterations predicts the
    base rate everywhere.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if not np.all(np.isin(y, (0, 1))):
        raise DataError("labels must be 0 or 1")
    y = y.astype(np.float64)
    p = y.mean()
    if p in (0.0, 1.0):
        raise SingleClassError("logistic baseline needs both classes")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Xs = (X - mean) / std
    w = np.zeros(X.shape[1])
    b = math.log(p / (1.0 - p))
    trace = [logistic_loss(y, Xs @ w + b)]
    for _ in range(int(iterations)):
        r = _sigmoid(Xs @ w + b) - y
        w = w - step * (Xs.T @ r) / y.size
        b = b - step * float(r.mean())
        trace.append(logistic_loss(y, Xs @ w + b))
    return LogisticModel(w, float(b), mean, std, loss_trace=trace)
