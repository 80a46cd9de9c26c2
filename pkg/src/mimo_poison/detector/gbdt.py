"""Histogram gradient-boosted trees for binary classification.

Trees grow leaf-wise: the leaf with the largest split gain is split next
until ``num_leaves`` is reached, with ``max_depth`` as a secondary cap.
Split candidates come from per-feature equal-frequency bins fitted once on
the training matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import kernels
from ..errors import ConfigError, DataError, SingleClassError

GAIN_EPS = 1e-12
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class GbdtParams:
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    num_leaves: int = 31
    subsample: float = 1.0
    min_leaf: int = 20
    n_bins: int = 64
    l2_leaf: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 0:
            raise ConfigError("n_estimators must be >= 0")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.num_leaves < 2:
            raise ConfigError("num_leaves must be >= 2")
        if self.max_depth < 63 and self.num_leaves > 2**self.max_depth:
            raise ConfigError("num_leaves cannot exceed 2**max_depth")
        if not 0 < self.subsample <= 1:
            raise ConfigError("subsample must lie in (0, 1]")
        if self.min_leaf < 1:
            raise ConfigError("min_leaf must be >= 1")
        if not 2 <= self.n_bins <= 256:
            raise ConfigError("n_bins must lie in [2, 256]")
        if self.l2_leaf < 0:
            raise ConfigError("l2_leaf must be >= 0")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown detector parameters: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad detector parameters: {exc}") from None


def bin_thresholds(values, n_bins):
    """Equal-frequency split thresholds for one feature.

    With at most ``n_bins`` distinct values every gap between neighbours is
    a candidate. Otherwise cuts fall after the value where the cumulative
    count first reaches each ``q / n_bins`` quantile. Thresholds sit midway
    between neighbouring distinct values.
    """
    u, counts = np.unique(np.asarray(values, dtype=np.float64), return_counts=True)
    if u.size < 2:
        return np.zeros(0)
    if u.size <= n_bins:
        cut = np.arange(u.size - 1)
    else:
        cc = np.cumsum(counts)
        n = cc[-1]
        targets = np.arange(1, n_bins) * (n / n_bins)
        cut = np.unique(np.searchsorted(cc, targets, side="left"))
        cut = cut[cut < u.size - 1]
    lo, hi = u[cut], u[cut + 1]
    mid = lo + (hi - lo) / 2.0
    return np.where(mid >= hi, lo, mid)


@dataclass
class Binner:
    thresholds: list  # one sorted array per feature

    @classmethod
    def fit(cls, X, n_bins):
        return cls([bin_thresholds(X[:, f], n_bins) for f in range(X.shape[1])])

    def transform(self, X):
        out = np.empty(X.shape, dtype=np.uint8)
        for f, thr in enumerate(self.thresholds):
            # bin b holds values in (thr[b-1], thr[b]]
            out[:, f] = np.searchsorted(thr, X[:, f], side="left")
        return out


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray
    n_rows: np.ndarray

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    @property
    def max_depth(self):
        return int(self.depth.max())

    def to_nested(self, node=0):
        if self.feature[node] < 0:
            return {"leaf": float(self.value[node]), "n": int(self.n_rows[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "n": int(self.n_rows[node]),
            "left": self.to_nested(int(self.left[node])),
            "right": self.to_nested(int(self.right[node])),
        }

    @classmethod
    def from_nested(cls, d):
        feature, threshold, left, right, value, depth, n_rows = [], [], [], [], [], [], []

        def walk(node, dep):
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            depth.append(dep)
            n_rows.append(int(node.get("n", 0)))
            if "leaf" in node:
                value[i] = float(node["leaf"])
                return i
            feature[i] = int(node["feature"])
            threshold[i] = float(node["threshold"])
            left[i] = walk(node["left"], dep + 1)
            right[i] = walk(node["right"], dep + 1)
            return i

        walk(d, 0)
        return cls(*(np.array(a) for a in (feature, threshold, left, right, value, depth, n_rows)))

    def structure(self, node=0):
        """Hashable (feature, threshold) skeleton, for structural comparisons."""
        if self.feature[node] < 0:
            return ("leaf",)
        return (int(self.feature[node]), float(self.threshold[node]),
                self.structure(int(self.left[node])), self.structure(int(self.right[node])))


@dataclass
class GbdtModel:
    prior_logit: float
    learning_rate: float
    n_features: int
    trees: list = field(default_factory=list)
    params: GbdtParams | None = None
    threshold: float = 0.5
    train_loss: list = field(default_factory=list)

    def _flat(self):
        if getattr(self, "_flat_cache", None) is None or self._flat_cache[0] != len(self.trees):
            offs, parts = 0, []
            roots = []
            for t in self.trees:
                roots.append(offs)
                parts.append((t.feature, t.threshold,
                              np.where(t.left >= 0, t.left + offs, -1),
                              np.where(t.right >= 0, t.right + offs, -1), t.value))
                offs += t.feature.size
            if parts:
                cat = [np.concatenate(c) for c in zip(*parts)]
            else:
                cat = [np.zeros(0, dtype=np.int32), np.zeros(0), np.zeros(0, dtype=np.int32),
                       np.zeros(0, dtype=np.int32), np.zeros(0)]
            self._flat_cache = (len(self.trees), cat, np.array(roots, dtype=np.int64))
        return self._flat_cache[1], self._flat_cache[2]

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X.shape[1]}")
        if not self.trees:
            return np.full(X.shape[0], self.prior_logit)
        (feature, threshold, left, right, value), roots = self._flat()
        return self.prior_logit + self.learning_rate * kernels.predict_forest(
            X, feature, threshold, left, right, value, roots)

    def predict_proba(self, X):
        return _sigmoid(self.decision_function(X))

    def predict(self, X):
        return (self.predict_proba(X) >= self.threshold).astype(np.int64)

    def to_dict(self):
        return {
            "kind": "gbdt",
            "prior_logit": self.prior_logit,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "threshold": self.threshold,
            "params": asdict(self.params) if self.params else None,
            "trees": [t.to_nested() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                prior_logit=float(d["prior_logit"]),
                learning_rate=float(d["learning_rate"]),
                n_features=int(d["n_features"]),
                trees=[Tree.from_nested(t) for t in d["trees"]],
                params=GbdtParams(**d["params"]) if d.get("params") else None,
                threshold=float(d.get("threshold", 0.5)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed detector model: {exc}") from None

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read detector {path}: {exc}") from None


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(y, logits):
    """Mean negative log-likelihood, computed stably."""
    return float(np.mean(np.logaddexp(0.0, logits) - y * logits))


def pick_first_max(gains):
    """Index of the first entry within ``TIE_RTOL`` of the maximum (flattened order)."""
    flat = np.ravel(gains)
    best = flat.max()
    tol = TIE_RTOL * max(1.0, abs(best))
    return int(np.flatnonzero(flat >= best - tol)[0])


def best_split(hg, hh, hn, n_thresholds, min_leaf, l2):
    """Best (gain, feature, bin) from node histograms; gain is -inf if no admissible split.

    Splitting after bin ``b`` sends bins ``0..b`` left.
    """
    n_features, n_bins = hg.shape
    gl = np.cumsum(hg, axis=1)[:, :-1]
    hl = np.cumsum(hh, axis=1)[:, :-1]
    nl = np.cumsum(hn, axis=1)[:, :-1]
    g_tot = gl[:, -1:] + hg[:, -1:] if n_bins > 1 else hg
    h_tot = hl[:, -1:] + hh[:, -1:] if n_bins > 1 else hh
    n_tot = nl[:, -1:] + hn[:, -1:] if n_bins > 1 else hn
    gr, hr, nr = g_tot - gl, h_tot - hl, n_tot - nl
    gain = gl**2 / (hl + l2) + gr**2 / (hr + l2) - g_tot**2 / (h_tot + l2)
    ok = (nl >= min_leaf) & (nr >= min_leaf)
    ok &= np.arange(n_bins - 1)[None, :] < np.asarray(n_thresholds)[:, None]
    gain = np.where(ok, gain, -np.inf)
    if not np.any(gain > GAIN_EPS):
        return -np.inf, -1, -1
    idx = pick_first_max(gain)
    f, b = divmod(idx, n_bins - 1)
    return float(gain[f, b]), f, b


def _grow_tree(X, binned, binner, grad, hess, rows, params):
    """Grow one leaf-wise tree on ``rows``; returns the Tree and each row's leaf value."""
    n_bins = max(1, max(t.size for t in binner.thresholds) + 1)
    n_thr = [t.size for t in binner.thresholds]
    l2 = params.l2_leaf

    nodes = []  # dicts: rows, depth, hist, split, children

    def make(node_rows, depth, hist):
        g_sum = float(np.sum(grad[node_rows]))
        h_sum = float(np.sum(hess[node_rows]))
        node = {"rows": node_rows, "depth": depth, "hist": hist,
                "value": -g_sum / (h_sum + l2), "left": -1, "right": -1,
                "feature": -1, "threshold": 0.0}
        if depth < params.max_depth and node_rows.size >= 2 * params.min_leaf:
            node["split"] = best_split(*hist, n_thr, params.min_leaf, l2)
        else:
            node["split"] = (-np.inf, -1, -1)
        nodes.append(node)
        return len(nodes) - 1

    make(rows, 0, kernels.build_histogram(binned, rows, grad, hess, n_bins))
    open_leaves = [0]
    n_leaves = 1
    while n_leaves < params.num_leaves:
        gains = np.array([nodes[i]["split"][0] for i in open_leaves])
        if not np.any(gains > GAIN_EPS):
            break
        leaf = open_leaves.pop(pick_first_max(gains))
        node = nodes[leaf]
        _, f, b = node["split"]
        node_rows = node["rows"]
        go_left = binned[node_rows, f] <= b
        left_rows, right_rows = node_rows[go_left], node_rows[~go_left]
        small, large = (left_rows, right_rows) if left_rows.size <= right_rows.size else (right_rows, left_rows)
        h_small = kernels.build_histogram(binned, small, grad, hess, n_bins)
        h_large = tuple(p - s for p, s in zip(node["hist"], h_small))
        h_left, h_right = (h_small, h_large) if small is left_rows else (h_large, h_small)
        node["feature"] = f
        node["threshold"] = float(binner.thresholds[f][b])
        node["left"] = make(left_rows, node["depth"] + 1, h_left)
        node["right"] = make(right_rows, node["depth"] + 1, h_right)
        node["hist"] = None
        open_leaves.extend([node["left"], node["right"]])
        n_leaves += 1

    tree = Tree(
        feature=np.array([n["feature"] for n in nodes], dtype=np.int32),
        threshold=np.array([n["threshold"] for n in nodes]),
        left=np.array([n["left"] for n in nodes], dtype=np.int32),
        right=np.array([n["right"] for n in nodes], dtype=np.int32),
        value=np.array([n["value"] if n["feature"] < 0 else 0.0 for n in nodes]),
        depth=np.array([n["depth"] for n in nodes], dtype=np.int32),
        n_rows=np.array([n["rows"].size for n in nodes], dtype=np.int64),
    )
    return tree


def train_gbdt(features, labels, params: GbdtParams = GbdtParams(), threshold=0.5) -> GbdtModel:
    """Boost ``params.n_estimators`` trees on the logistic loss."""
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError("features must be (n, d) with one label per row")
    if not np.all(np.isin(y, (0, 1))):
        raise DataError("labels must be 0 or 1")
    y = y.astype(np.float64)
    n_pos = int(y.sum())
    if n_pos < 2 or y.size - n_pos < 2:
        raise SingleClassError("need at least two rows of each class")
    if not np.all(np.isfinite(X)):
        raise DataError("features contain non-finite values")
    p = n_pos / y.size
    prior = math.log(p / (1.0 - p))
    binner = Binner.fit(X, params.n_bins)
    binned = binner.transform(X)
    rng = np.random.default_rng(params.seed)
    logits = np.full(y.size, prior)
    model = GbdtModel(prior, params.learning_rate, X.shape[1], [], params, threshold)
    model.train_loss.append(logistic_loss(y, logits))
    all_rows = np.arange(y.size, dtype=np.int64)
    n_sub = max(1, int(round(params.subsample * y.size)))
    for _ in range(params.n_estimators):
        if params.subsample < 1.0:
            rows = np.sort(rng.choice(y.size, size=n_sub, replace=False)).astype(np.int64)
        else:
            rows = all_rows
        prob = _sigmoid(logits)
        grad = prob - y
        hess = prob * (1.0 - prob)
        tree = _grow_tree(X, binned, binner, grad, hess, rows, params)
        model.trees.append(tree)
        logits = logits + params.learning_rate * kernels.predict_forest(
            X, tree.feature, tree.threshold, tree.left, tree.right, tree.value, np.zeros(1, dtype=np.int64))
        model.train_loss.append(logistic_loss(y, logits))
    return model


def predict_proba(model: GbdtModel, row) -> float:
    """Probability that one feature row is poisoned."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise DataError("expected a single feature row")
    return float(model.predict_proba(row[None, :])[0])
