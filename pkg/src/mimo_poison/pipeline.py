"""Undefended / Attacked / Secured experiment, sweeps and plot-data export."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import FGSM_VARIANTS, AttackConfig, fgsm_inputs, poison
from .channel import ScenarioConfig, default_urban_scene, generate_scenario, load_scene
from .dataset import (
    FEATURES,
    RecordSet,
    SplitSpec,
    correlation_matrix,
    histogram,
    load_csv,
    split,
)
from .detector import (
    GbdtParams,
    classification_metrics,
    grid_search,
    train_gbdt,
    train_logistic_baseline,
)
from .detector.features import FEATURE_SETS, detector_features
from .errors import ConfigError, DataError, EmptySecuredError
from .regression import LinearModel, RegressionMetrics, evaluate, fit_least_squares

DEFAULT_SEED = 0
MODES = ("evaluation_set", "training_set")
PLOT_KINDS = ("histogram", "correlation", "scenario_trace", "sweep")
# feature-scaled epsilons, in units of each feature's standardized train range
DEFAULT_EPSILONS = (0.003, 0.01, 0.03, 0.1, 0.3)
DEFAULT_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 0.95, 0.99999)
DEFAULT_GRID = (
    {"n_estimators": 100, "max_depth": 6, "num_leaves": 20, "subsample": 0.7},
    {"n_estimators": 200, "max_depth": 8, "num_leaves": 31, "subsample": 0.7},
)
TRACE_RECORDS = 50
HIST_BINS = 40


@dataclass(frozen=True)
class DetectorSpec:
    grid: tuple = DEFAULT_GRID  # dicts of GbdtParams fields
    k_folds: int = 3
    threshold: float = 0.5
    baseline_iterations: int = 300
    baseline_step: float = 0.5
    features: str = "physics"  # or "raw"

    def __post_init__(self):
        if not self.grid:
            raise ConfigError("detector grid is empty")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be >= 2")
        if not 0 < self.threshold < 1:
            raise ConfigError("detector threshold must lie in (0, 1)")
        if self.features not in FEATURE_SETS:
            raise ConfigError(f"unknown detector feature set: {self.features}")

    def candidates(self, seed):
        out = []
        for entry in self.grid:
            if not isinstance(entry, dict):
                raise ConfigError("detector grid entries must be objects")
            out.append(GbdtParams.from_dict({"seed": seed, **entry}))
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment run depends on.

    ``data`` holds exactly one of ``scene`` (path or inline object), ``csv``
    (path) or ``default_scene`` (keyword overrides for the built-in urban
    scene). The top-level ``seed`` drives the split, the attack and the
    detector; a scene keeps its own generation seed.
    """

    data: dict = field(default_factory=lambda: {"default_scene": {}})
    split: SplitSpec = field(default_factory=SplitSpec)
    attack: AttackConfig = field(default_factory=AttackConfig)
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    mode: str = "evaluation_set"
    seed: int = DEFAULT_SEED
    epsilons: tuple = DEFAULT_EPSILONS
    fractions: tuple = DEFAULT_FRACTIONS
    base_dir: str = "."

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode: {self.mode}")
        keys = set(self.data)
        if len(keys & {"scene", "csv", "default_scene"}) != 1 or keys - {"scene", "csv", "default_scene"}:
            raise ConfigError("data must hold exactly one of: scene, csv, default_scene")
        if not self.epsilons or any(not (e > 0 and math.isfinite(e)) for e in self.epsilons):
            raise ConfigError("epsilons must be a non-empty list of positive numbers")
        if not self.fractions or any(not 0 <= f <= 1 for f in self.fractions):
            raise ConfigError("fractions must be a non-empty list in [0, 1]")

    @classmethod
    def from_dict(cls, d, base_dir=".", seed=None):
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        d = dict(d)
        allowed = {"data", "split", "attack", "detector", "mode", "seed", "epsilons", "fractions"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        run_seed = seed if seed is not None else int(d.get("seed", DEFAULT_SEED))
        try:
            sp = dict(d.get("split", {}))
            split_spec = SplitSpec(ratios=tuple(sp.get("ratios", (0.4, 0.4, 0.2))), seed=run_seed)
        except DataError as exc:
            raise ConfigError(str(exc)) from None
        attack = AttackConfig.from_dict({**d.get("attack", {}), "seed": run_seed})
        det = dict(d.get("detector", {}))
        try:
            if "grid" in det:
                det["grid"] = tuple(det["grid"])
            detector = DetectorSpec(**det)
        except TypeError as exc:
            raise ConfigError(f"bad detector section: {exc}") from None
        return cls(
            data=dict(d.get("data", {"default_scene": {}})),
            split=split_spec,
            attack=attack,
            detector=detector,
            mode=d.get("mode", "evaluation_set"),
            seed=run_seed,
            epsilons=tuple(float(e) for e in d.get("epsilons", DEFAULT_EPSILONS)),
            fractions=tuple(float(f) for f in d.get("fractions", DEFAULT_FRACTIONS)),
            base_dir=str(base_dir),
        )

    def to_dict(self):
        return {
            "data": self.data,
            "split": {"ratios": list(self.split.ratios)},
            "attack": self.attack.to_dict(),
            "detector": {**asdict(self.detector), "grid": [dict(g) for g in self.detector.grid]},
            "mode": self.mode,
            "seed": self.seed,
            "epsilons": list(self.epsilons),
            "fractions": list(self.fractions),
        }

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_experiment(path, seed=None) -> ExperimentConfig:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read experiment config {path}: {exc}") from None
    return ExperimentConfig.from_dict(d, base_dir=Path(path).parent, seed=seed)


def load_data(config: ExperimentConfig) -> RecordSet:
    src = config.data
    base = Path(config.base_dir)
    if "csv" in src:
        return load_csv(base / src["csv"])
    if "scene" in src:
        scene = src["scene"]
        sc = ScenarioConfig.from_dict(scene) if isinstance(scene, dict) else load_scene(base / scene)
        return generate_scenario(sc)
    try:
        sc = default_urban_scene(**src["default_scene"])
    except TypeError as exc:
        raise ConfigError(f"bad default_scene options: {exc}") from None
    return generate_scenario(sc)


# experiment


@dataclass
class ExperimentReport:
    undefended: RegressionMetrics
    attacked: RegressionMetrics
    secured: RegressionMetrics
    detector: dict  # metrics, chosen params, cv scores, baseline row
    removed_count: int
    sweeps: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "scenarios": {
                "undefended": self.undefended.as_dict(),
                "attacked": self.attacked.as_dict(),
                "secured": self.secured.as_dict(),
            },
            "detector": self.detector,
            "removed_count": self.removed_count,
            "sweeps": self.sweeps,
            "plots": self.plots,
            "provenance": self.provenance,
        }

    def to_json(self):
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def to_text(self):
        return render_text(self.to_dict())


def _clean(obj):
    """Replace NaN/inf with None so the JSON stays strict."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _fmt(v, spec):
    width = int(spec.split(".")[0])
    return f"{'n/a':>{width}}" if v is None else format(v, spec)


def render_text(report: dict) -> str:
    """Aligned text tables: scenario dynamics and detector comparison."""
    lines = [f"{'Scenario':<12} {'MSE':>12} {'R^2':>10} {'N':>8}"]
    for name, m in report["scenarios"].items():
        lines.append(f"{name.capitalize():<12} {_fmt(m['mse'], '12.4f')} {_fmt(m['r2'], '10.4f')} {m['n']:>8d}")
    lines.append(f"removed records: {report['removed_count']}")
    lines.append("")
    lines.append(f"{'Classifier':<24} {'Precision':>10} {'Recall':>10} {'F1':>10}")
    for row in report["detector"].get("table", []):
        lines.append(f"{row['classifier']:<24} {_fmt(row['precision'], '10.4f')} "
                     f"{_fmt(row['recall'], '10.4f')} {_fmt(row['f1'], '10.4f')}")
    return "\n".join(lines) + "\n"


@dataclass
class _Context:
    config: ExperimentConfig
    data: RecordSet
    train: RecordSet
    pool: RecordSet
    test: RecordSet
    model: LinearModel
    undefended: RegressionMetrics


def prepare(config: ExperimentConfig, data: RecordSet | None = None) -> _Context:
    data = load_data(config) if data is None else data
    train, pool, test = split(data, config.split)
    model = fit_least_squares(train)
    return _Context(config, data, train, pool, test, model, evaluate(model, test))


def detector_training_set(ctx: _Context, attack: AttackConfig):
    """Balanced benign/poisoned rows from the pool split.

    The pool is shuffled and halved; the second half is attacked in full.
    """
    n = len(ctx.pool)
    half = n // 2
    perm = np.random.default_rng([ctx.config.seed, 0xDE7]).permutation(n)
    clean = ctx.pool.subset(np.sort(perm[:half]))
    attacked = poison(ctx.pool.subset(np.sort(perm[half:2 * half])), ctx.model,
                      attack.with_(fraction=1.0)).records
    X = detector_features(np.vstack([clean.data, attacked.data]), ctx.config.detector.features)
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    return X, y


def train_detector(ctx: _Context, attack: AttackConfig):
    """Grid-search the GBDT on pool-derived data, refit the winner, fit the baseline."""
    spec = ctx.config.detector
    X, y = detector_training_set(ctx, attack)
    search = grid_search(X, y, spec.candidates(ctx.config.seed), spec.k_folds, seed=ctx.config.seed)
    model = train_gbdt(X, y, search.best, threshold=spec.threshold)
    baseline = train_logistic_baseline(X, y, spec.baseline_iterations, spec.baseline_step)
    return model, baseline, search


def _metrics_row(name, cm):
    return {"classifier": name, **cm.as_dict()}


def _retained(records: RecordSet, flagged):
    keep = np.flatnonzero(np.asarray(flagged) == 0)
    if keep.size == 0:
        raise EmptySecuredError("the detector flagged every record; nothing left to evaluate")
    return records.subset(keep)


def run_experiment(config: ExperimentConfig, data: RecordSet | None = None,
                   include_plots=True, include_sweeps=True) -> ExperimentReport:
    ctx = prepare(config, data)
    attack = config.attack
    model, baseline, search = train_detector(ctx, attack)

    if config.mode == "evaluation_set":
        contaminated = poison(ctx.test, ctx.model, attack)
        attacked = evaluate(ctx.model, contaminated.records)
        flagged = model.predict(detector_features(contaminated.records.data, config.detector.features))
        secured = evaluate(ctx.model, _retained(contaminated.records, flagged))
        screened = contaminated
    else:
        contaminated = poison(ctx.train, ctx.model, attack)
        attacked = evaluate(fit_least_squares(contaminated.records), ctx.test)
        flagged = model.predict(detector_features(contaminated.records.data, config.detector.features))
        secured = evaluate(fit_least_squares(_retained(contaminated.records, flagged)), ctx.test)
        screened = contaminated

    cm = classification_metrics(flagged, screened.labels)
    cm_base = classification_metrics(
        baseline.predict(detector_features(screened.records.data, config.detector.features)), screened.labels)
    detector = {
        "params": asdict(search.best),
        "features": config.detector.features,
        "cv_mean_f1": search.scores,
        "metrics": cm.as_dict(),
        "table": [_metrics_row("gbdt", cm), _metrics_row("logistic_baseline", cm_base)],
        "train_rows": int(2 * (len(ctx.pool) // 2)),
        "balance": "pool halved: clean half vs fully attacked half",
    }
    report = ExperimentReport(
        undefended=ctx.undefended,
        attacked=attacked,
        secured=secured,
        detector=detector,
        removed_count=int(np.sum(flagged)),
        provenance={
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "mode": config.mode,
            "version": __version__,
            "records": len(ctx.data),
            "split_sizes": [len(ctx.train), len(ctx.pool), len(ctx.test)],
            "skipped_victims": len(contaminated.skipped),
        },
    )
    if include_sweeps:
        report.sweeps = {
            "epsilon": sweep_epsilon(config, config.epsilons, ctx=ctx),
            "fraction": sweep_fraction(config, config.fractions, ctx=ctx),
        }
    if include_plots:
        report.plots = {
            "histogram": histogram_data(ctx.data),
            "correlation": correlation_data(ctx.data),
            "scenario_trace": scenario_trace(ctx),
        }
    return report


# sweeps


def _attacked_metrics(ctx: _Context, attack: AttackConfig) -> RegressionMetrics:
    if ctx.config.mode == "evaluation_set":
        return evaluate(ctx.model, poison(ctx.test, ctx.model, attack).records)
    return evaluate(fit_least_squares(poison(ctx.train, ctx.model, attack).records), ctx.test)


def _row(key, value, m: RegressionMetrics):
    return {key: value, "mse": m.mse, "r2": None if math.isnan(m.r2) else m.r2, "n": m.n}


def sweep_epsilon(config: ExperimentConfig, epsilons, ctx: _Context | None = None):
    """Attacked-scenario metrics per epsilon, with an epsilon = 0 row equal to Undefended."""
    if not len(epsilons):
        raise ConfigError("sweep needs at least one epsilon")
    ctx = prepare(config) if ctx is None else ctx
    rows = [_row("epsilon", 0.0, ctx.undefended)]
    for eps in epsilons:
        rows.append(_row("epsilon", float(eps), _attacked_metrics(ctx, config.attack.with_(epsilon=float(eps)))))
    return rows


def sweep_fraction(config: ExperimentConfig, fractions, ctx: _Context | None = None):
    ctx = prepare(config) if ctx is None else ctx
    rows = []
    for f in fractions:
        rows.append(_row("fraction", float(f), _attacked_metrics(ctx, config.attack.with_(fraction=float(f)))))
    return rows


# plot data


def _hist2d(x, y, bins):
    counts, xe, ye = np.histogram2d(x, y, bins=bins)
    return {"x_edges": xe.tolist(), "y_edges": ye.tolist(), "counts": counts.astype(np.int64).tolist()}


def histogram_data(rs: RecordSet, bins=HIST_BINS):
    pl = rs.column("pathloss")
    return {
        "n": len(rs),
        "pathloss": histogram(rs, "pathloss", bins).as_dict(),
        "distance": histogram(rs, "distance", bins).as_dict(),
        "time_of_arrival": histogram(rs, "time_of_arrival", bins).as_dict(),
        "pathloss_vs_distance": _hist2d(rs.column("distance"), pl, bins),
        "pathloss_vs_time_of_arrival": _hist2d(rs.column("time_of_arrival"), pl, bins),
    }


def correlation_data(rs: RecordSet):
    return {"features": list(FEATURES), "matrix": correlation_matrix(rs).tolist()}


def scenario_trace(ctx: _Context, n=TRACE_RECORDS):
    """(index, true, predicted) triples on the first ``n`` test records: clean and each FGSM variant."""
    sub = ctx.test.subset(np.arange(min(n, len(ctx.test))))
    X, y = sub.inputs, sub.target
    flips = np.where(np.arange(len(sub)) % 2 == 0, 1.0, -1.0)
    series = {"clean": ctx.model.predict_inputs(X)}
    eps, scaling = ctx.config.attack.epsilon, ctx.config.attack.scaling
    for variant in FGSM_VARIANTS:
        X_adv = fgsm_inputs(ctx.model, X, y, eps, scaling, variant, flips)
        series[variant] = ctx.model.predict_inputs(X_adv)
    return {
        name: [[i, float(y[i]), float(p[i])] for i in range(len(sub))] for name, p in series.items()
    }


def emit_plot_data(source, kind):
    """Plot-ready JSON object for ``kind`` from a report dict or a RecordSet."""
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind: {kind} (choose from {', '.join(PLOT_KINDS)})")
    if isinstance(source, RecordSet):
        if kind == "histogram":
            return histogram_data(source)
        if kind == "correlation":
            return correlation_data(source)
        raise ConfigError(f"plot kind {kind} needs an experiment report")
    if kind == "sweep":
        sweeps = source.get("sweeps") or {}
        if not sweeps:
            raise DataError("report has no sweep tables")
        return sweeps
    plots = source.get("plots") or {}
    if kind not in plots:
        raise DataError(f"report has no {kind} data")
    return plots[kind]


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **changes)
