"""Least-squares pathloss regression with analytic input gradients.

Features are z-scored with statistics fitted on the training data, so the
model's weights, gradients and every attack step live in standardized space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import INPUT_FEATURES, Record, RecordSet
from .errors import ConfigError, DataError

RIDGE_LAMBDA = 1e-8


@dataclass
class LinearModel:
    weights: np.ndarray  # per input feature, standardized space
    bias: float
    mean: np.ndarray
    std: np.ndarray
    range_std: np.ndarray  # train range of each feature, in standardized units
    ridge: bool = False
    standardized: bool = True
    feature_names: tuple = INPUT_FEATURES
    meta: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return self.weights.shape[0]

    def standardize(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def destandardize(self, Xs):
        return np.asarray(Xs, dtype=np.float64) * self.std + self.mean

    def predict_standardized(self, Xs):
        return np.asarray(Xs, dtype=np.float64) @ self.weights + self.bias

    def predict_inputs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature value")
        return self.predict_standardized(self.standardize(X))

    def original_coefficients(self):
        """(slopes, intercept) in the original feature units."""
        slopes = self.weights / self.std
        return slopes, float(self.bias - np.sum(slopes * self.mean))

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "range_std": self.range_std.tolist(),
            "ridge": self.ridge,
            "standardized": self.standardized,
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                weights=np.array(d["weights"], dtype=np.float64),
                bias=float(d["bias"]),
                mean=np.array(d["mean"], dtype=np.float64),
                std=np.array(d["std"], dtype=np.float64),
                range_std=np.array(d["range_std"], dtype=np.float64),
                ridge=bool(d.get("ridge", False)),
                standardized=bool(d.get("standardized", True)),
                feature_names=tuple(d.get("feature_names", INPUT_FEATURES)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model description: {exc}") from None

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read model {path}: {exc}") from None
        return cls.from_dict(d)


@dataclass(frozen=True)
class RegressionMetrics:
    mse: float
    r2: float  # nan when the targets are constant
    n: int = 0

    def as_dict(self):
        return {"mse": self.mse, "r2": None if math.isnan(self.r2) else self.r2, "n": self.n}


def _as_xy(data, y=None):
    if isinstance(data, RecordSet):
        return data.inputs, data.target
    return np.asarray(data, dtype=np.float64), np.asarray(y, dtype=np.float64)


def fit_least_squares(train, y=None, standardize=True) -> LinearModel:
    """Ordinary least squares on z-scored inputs.

    ``train`` is a RecordSet (target = pathloss) or a feature matrix with
    ``y`` given. Constant features get std 1 and a zero weight. A
    rank-deficient design falls back to ridge with ``RIDGE_LAMBDA``.
    """
    X, y = _as_xy(train, y)
    n, p = X.shape
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("training data contains non-finite values")
    raw_std = X.std(axis=0)
    active = raw_std > 0
    if standardize:
        mean = X.mean(axis=0)
        std = np.where(active, raw_std, 1.0)
    else:
        mean = np.zeros(p)
        std = np.ones(p)
    range_std = (X.max(axis=0) - X.min(axis=0)) / std
    if n <= int(active.sum()):
        raise DataError(f"need more records ({n}) than active features ({int(active.sum())})")

    Xs = (X - mean) / std
    design = np.column_stack([Xs[:, active], np.ones(n)])
    rank = np.linalg.matrix_rank(design)
    ridge = rank < design.shape[1]
    if ridge:
        reg = np.full(design.shape[1], RIDGE_LAMBDA)
        reg[-1] = 0.0
        coef = np.linalg.solve(design.T @ design + np.diag(reg), design.T @ y)
    else:
        q, r = np.linalg.qr(design)
        coef = np.linalg.solve(r, q.T @ y)
    weights = np.zeros(p)
    weights[active] = coef[:-1]
    return LinearModel(
        weights=weights,
        bias=float(coef[-1]),
        mean=mean,
        std=std,
        range_std=range_std,
        ridge=bool(ridge),
        standardized=bool(standardize),
        meta={"rank": int(rank), "n_train": int(n)},
    )


def _inputs_of(record):
    if isinstance(record, Record):
        return record.inputs()
    return np.asarray(record, dtype=np.float64)


def predict(model: LinearModel, record) -> float:
    """Pathloss estimate (dB) for one Record or raw input vector."""
    return float(model.predict_inputs(_inputs_of(record))[0])


def input_gradients(model: LinearModel, X, y):
    """Rows of d/dx~ (w.x~ + b - y)^2 = 2 (prediction - y) w, standardized space."""
    residual = model.predict_inputs(X) - np.asarray(y, dtype=np.float64)
    return 2.0 * residual[:, None] * model.weights[None, :]


def loss_gradient_wrt_input(model: LinearModel, record, target=None) -> np.ndarray:
    """Gradient of the squared error w.r.t. the standardized inputs of one record."""
    if target is None:
        if not isinstance(record, Record):
            raise DataError("target is required for raw input vectors")
        target = record.pathloss
    return input_gradients(model, _inputs_of(record)[None, :], [target])[0]


def regression_metrics(predictions, targets) -> RegressionMetrics:
    """MSE and R^2; R^2 is nan when the targets are constant."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise DataError("predictions and targets must have equal non-zero length")
    residual = p - t
    mse = float(np.mean(residual**2))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    r2 = math.nan if ss_tot == 0 else 1.0 - float(np.sum(residual**2)) / ss_tot
    return RegressionMetrics(mse=mse, r2=r2, n=int(p.size))


def evaluate(model: LinearModel, recordset: RecordSet) -> RegressionMetrics:
    return regression_metrics(model.predict_inputs(recordset.inputs), recordset.target)
