"""Adversarial perturbations of records against a fitted LinearModel.

All steps are taken in the model's standardized input space and mapped back
to original units afterwards. The pathloss target is never touched; ``los``
is re-rounded to {0, 1} after perturbation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import (
    FEATURES,
    INPUT_FEATURES,
    INPUT_INDEX,
    Record,
    RecordSet,
    load_csv,
    save_csv,
)
from .errors import ConfigError, NoCandidateError
from .regression import LinearModel

METHODS = ("fgsm", "distance", "lowprofool")
SCALINGS = ("absolute", "feature_scaled")
FGSM_VARIANTS = ("fluctuation", "maximize", "plain")
LABEL_COLUMN = "is_poisoned"
_LOS_INPUT = INPUT_FEATURES.index("los")


@dataclass(frozen=True)
class LowProFoolParams:
    steps: int = 50
    step_size: float = 0.01
    trade_off: float = 1.0
    feature_weights: tuple | None = None  # None: uniform weights


@dataclass(frozen=True)
class DistanceParams:
    delta: float = 10.0  # dB


@dataclass(frozen=True)
class AttackConfig:
    method: str = "fgsm"
    epsilon: float = 0.05
    fraction: float = 0.6
    scaling: str = "feature_scaled"
    fgsm_variant: str = "maximize"
    additive: bool = True  # False: literal x' = eps * sign(grad)
    lowprofool: LowProFoolParams = field(default_factory=LowProFoolParams)
    distance: DistanceParams = field(default_factory=DistanceParams)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown attack method: {self.method}")
        if self.scaling not in SCALINGS:
            raise ConfigError(f"unknown scaling: {self.scaling}")
        if self.fgsm_variant not in FGSM_VARIANTS:
            raise ConfigError(f"unknown fgsm variant: {self.fgsm_variant}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ConfigError("epsilon must be a positive finite number")
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigError("fraction must lie in [0, 1]")
        if self.lowprofool.steps < 0:
            raise ConfigError("lowprofool steps must be >= 0")
        if self.lowprofool.trade_off < 0:
            raise ConfigError("lowprofool trade-off must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown attack keys: {sorted(unknown)}")
        try:
            if "lowprofool" in d:
                lp = dict(d["lowprofool"])
                if lp.get("feature_weights") is not None:
                    lp["feature_weights"] = tuple(float(v) for v in lp["feature_weights"])
                d["lowprofool"] = LowProFoolParams(**lp)
            if "distance" in d:
                d["distance"] = DistanceParams(**d["distance"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad attack config: {exc}") from None

    def with_(self, **changes):
        return replace(self, **changes)


def _finish(model, X, Xs_new):
    """Map standardized inputs back to original units and re-round ``los``."""
    out = model.destandardize(Xs_new)
    out[:, _LOS_INPUT] = np.clip(np.round(out[:, _LOS_INPUT]), 0.0, 1.0)
    return out


def _epsilon_vector(model, epsilon, scaling):
    if scaling == "absolute":
        return np.full(model.n_features, float(epsilon))
    return float(epsilon) * model.range_std


def fgsm_directions(model, X, y, variant, flips=None):
    """Per-record sign vectors ``s`` for the three FGSM variants.

    plain: sign of the loss gradient (pushes each error further along its own sign).
    maximize: sign(w), every prediction goes up.
    fluctuation: sign(w) times a per-record +/-1 in ``flips``.
    """
    n = X.shape[0]
    w_sign = np.sign(model.weights)
    if variant == "maximize":
        return np.broadcast_to(w_sign, (n, model.n_features)).copy()
    if variant == "fluctuation":
        flips = np.ones(n) if flips is None else np.asarray(flips, dtype=np.float64)
        return flips[:, None] * w_sign[None, :]
    if variant == "plain":
        residual = model.predict_inputs(X) - y
        return np.sign(2.0 * residual[:, None] * model.weights[None, :])
    raise ConfigError(f"unknown fgsm variant: {variant}")


def fgsm_inputs(model, X, y, epsilon, scaling="absolute", variant="plain", flips=None, additive=True):
    """FGSM on an ``(n, 11)`` input matrix; returns perturbed inputs in original units."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    s = fgsm_directions(model, X, y, variant, flips)
    step = _epsilon_vector(model, epsilon, scaling) * s
    Xs = model.standardize(X)
    return _finish(model, X, Xs + step if additive else step)


def _with_inputs(data, X_new):
    out = np.array(data, dtype=np.float64, copy=True)
    out[:, INPUT_INDEX] = X_new
    return out


def fgsm_perturb(model: LinearModel, record: Record, epsilon, scaling="absolute",
                 variant="plain", direction=1, additive=True) -> Record:
    """One FGSM step on a single record. ``direction`` is the fluctuation flip."""
    data = record.to_array()[None, :]
    X_new = fgsm_inputs(model, data[:, INPUT_INDEX], [record.pathloss], epsilon, scaling,
                        variant, [direction], additive)
    return Record.from_array(_with_inputs(data, X_new)[0])


def _nearest_donors(model, victims_X, victims_y, pool_X, pool_y, delta, chunk=2048):
    """Index of the nearest pool row (standardized L2) clearing the target gap; -1 if none."""
    V = model.standardize(victims_X)
    P = model.standardize(pool_X)
    p_sq = np.sum(P**2, axis=1)
    out = np.full(V.shape[0], -1, dtype=np.int64)
    for s in range(0, V.shape[0], chunk):
        v = V[s:s + chunk]
        d2 = np.sum(v**2, axis=1)[:, None] - 2.0 * v @ P.T + p_sq[None, :]
        gap_ok = np.abs(pool_y[None, :] - victims_y[s:s + chunk, None]) >= delta
        d2 = np.where(gap_ok, d2, np.inf)
        best = np.argmin(d2, axis=1)
        found = np.isfinite(d2[np.arange(best.size), best])
        out[s:s + chunk] = np.where(found, best, -1)
    return out


def distance_based_attack(record: Record, pool: RecordSet, delta, model: LinearModel | None = None) -> Record:
    """Replace the record's inputs with those of the nearest pool record whose
    pathloss differs by at least ``delta`` dB; the record keeps its own target.

    Distances use the model's standardization, or the pool's own statistics
    when no model is given.
    """
    if len(pool) == 0:
        raise NoCandidateError("empty donor pool")
    if model is None:
        model = _pool_scaler(pool)
    donor = _nearest_donors(model, record.inputs()[None, :], np.array([record.pathloss]),
                            pool.inputs, pool.target, delta)[0]
    if donor < 0:
        raise NoCandidateError(f"no pool record differs by >= {delta} dB in pathloss")
    data = record.to_array()[None, :]
    return Record.from_array(_with_inputs(data, pool.inputs[donor][None, :])[0])


def _pool_scaler(pool):
    X = pool.inputs
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return LinearModel(np.zeros(X.shape[1]), 0.0, X.mean(axis=0), std, np.zeros(X.shape[1]))


def lowprofool_step(model: LinearModel, params: LowProFoolParams) -> np.ndarray:
    """Perturbation r in standardized space after ``params.steps`` ascent steps.

    Each step moves along w (raises the prediction) minus trade_off times the
    gradient of the weighted norm ||v * r||_2, taken as 0 at r = 0. For a
    linear model r is the same for every record.
    """
    w = model.weights
    v = np.ones_like(w) if params.feature_weights is None else np.asarray(params.feature_weights, dtype=np.float64)
    if v.shape != w.shape:
        raise ConfigError(f"feature_weights needs {w.size} entries")
    r = np.zeros_like(w)
    for _ in range(params.steps):
        norm = float(np.linalg.norm(v * r))
        penalty = (v**2) * r / norm if norm > 0 else np.zeros_like(r)
        r = r + params.step_size * (w - params.trade_off * penalty)
    return r


def lowprofool_inputs(model, X, params: LowProFoolParams):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    r = lowprofool_step(model, params)
    return _finish(model, X, model.standardize(X) + r)


def lowprofool_perturb(model: LinearModel, record: Record, config) -> Record:
    params = config.lowprofool if isinstance(config, AttackConfig) else config
    data = record.to_array()[None, :]
    return Record.from_array(_with_inputs(data, lowprofool_inputs(model, data[:, INPUT_INDEX], params))[0])


@dataclass
class PoisonedSet:
    records: RecordSet
    labels: np.ndarray  # 1 = poisoned
    skipped: list = field(default_factory=list)  # victims the attack could not perturb

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (len(self.records),):
            raise ConfigError("labels must align with records")

    @property
    def n_poisoned(self):
        return int(self.labels.sum())

    def poisoned_only(self) -> RecordSet:
        return self.records.subset(np.flatnonzero(self.labels == 1))

    def save(self, path):
        save_csv(self.records, path, {LABEL_COLUMN: self.labels})

    @classmethod
    def load(cls, path):
        rs, extra = load_csv(path, extra_columns=(LABEL_COLUMN,))
        return cls(rs, extra[LABEL_COLUMN])


def victim_count(fraction, n):
    """round(fraction * n), halves rounded up."""
    return min(n, int(math.floor(fraction * n + 0.5)))


def poison(recordset: RecordSet, model: LinearModel, config: AttackConfig, pool: RecordSet | None = None) -> PoisonedSet:
    """Perturb a seeded uniform choice of round(fraction * N) records in place.

    Order is preserved and labels mark the perturbed rows. The distance attack
    draws donors from ``pool`` (default: the record set itself); victims with
    no admissible donor stay benign and are listed in ``skipped``.
    """
    n = len(recordset)
    rng = np.random.default_rng(config.seed)
    k = victim_count(config.fraction, n)
    victims = np.sort(rng.choice(n, size=k, replace=False)) if k else np.zeros(0, dtype=np.int64)
    flips = rng.choice(np.array([-1.0, 1.0]), size=k)
    data = np.array(recordset.data, copy=True)
    labels = np.zeros(n, dtype=np.int64)
    skipped = []
    if k:
        X = data[victims][:, INPUT_INDEX]
        y = data[victims, FEATURES.index("pathloss")]
        if config.method == "fgsm":
            X_new = fgsm_inputs(model, X, y, config.epsilon, config.scaling, config.fgsm_variant,
                                flips, config.additive)
            ok = np.ones(k, dtype=bool)
        elif config.method == "lowprofool":
            X_new = lowprofool_inputs(model, X, config.lowprofool)
            ok = np.ones(k, dtype=bool)
        else:
            pool = recordset if pool is None else pool
            donors = _nearest_donors(model, X, y, pool.inputs, pool.target, config.distance.delta)
            ok = donors >= 0
            X_new = X.copy()
            X_new[ok] = pool.inputs[donors[ok]]
            skipped = [int(v) for v in victims[~ok]]
        rows = victims[ok]
        data[np.ix_(rows, INPUT_INDEX)] = X_new[ok]
        labels[rows] = 1
    return PoisonedSet(RecordSet(data, provenance=recordset.provenance), labels, skipped)
