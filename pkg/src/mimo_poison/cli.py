"""Command-line interface.

Exit codes: 0 success, 2 configuration or usage error, 3 data error.
Seeds resolve as: ``--seed`` flag, else the seed in the config file, else 0.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .attacks import AttackConfig, PoisonedSet, poison
from .channel import default_urban_scene, generate_scenario, load_scene
from .dataset import SplitSpec, load_csv, save_csv, split
from .detector import GbdtParams, classification_metrics, grid_search, train_gbdt
from .detector.features import FEATURE_SETS, detector_features
from .errors import ConfigError, DataError, MimoPoisonError
from .pipeline import (
    DEFAULT_SEED,
    PLOT_KINDS,
    dump_json,
    emit_plot_data,
    load_experiment,
    prepare,
    run_experiment,
    sweep_epsilon,
    sweep_fraction,
)
from .regression import LinearModel, evaluate, fit_least_squares

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from None


def _write(path, text):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _ratios(text):
    values = _float_list(text)
    if len(values) != 3:
        raise argparse.ArgumentTypeError("split needs three ratios")
    return tuple(values)


def _split_spec(args):
    try:
        return SplitSpec(ratios=args.split, seed=args.seed if args.seed is not None else DEFAULT_SEED)
    except DataError as exc:
        raise ConfigError(str(exc)) from None


# commands


def cmd_generate(args):
    if args.scene:
        scene = load_scene(args.scene)
    else:
        scene = default_urban_scene()
    if args.seed is not None:
        scene = replace(scene, seed=args.seed)
    rs = generate_scenario(scene)
    save_csv(rs, args.out)
    m = rs.meta
    print(f"wrote {len(rs)} records to {args.out} "
          f"(grid {m.get('grid_users')}, inside buildings {m.get('inside_buildings')}, "
          f"blocked {m.get('blocked')})", file=sys.stderr)


def cmd_train(args):
    rs = load_csv(args.data)
    train = rs if args.full else split(rs, _split_spec(args))[0]
    model = fit_least_squares(train, standardize=not args.no_standardize)
    model.save(args.out)
    print(f"trained on {len(train)} records (ridge={model.ridge})", file=sys.stderr)


def cmd_evaluate(args):
    rs = load_csv(args.data)
    model = LinearModel.load(args.model)
    part = rs if args.part == "all" else split(rs, _split_spec(args))[("train", "pool", "test").index(args.part)]
    _write(args.out, dump_json(evaluate(model, part).as_dict()))


def cmd_attack(args):
    rs = load_csv(args.data)
    model = LinearModel.load(args.model)
    cfg = AttackConfig.from_dict(_read_json(args.config, "attack config"))
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    pool = load_csv(args.pool) if args.pool else None
    ps = poison(rs, model, cfg, pool=pool)
    ps.save(args.out)
    msg = f"poisoned {ps.n_poisoned} of {len(rs)} records"
    if ps.skipped:
        msg += f"; {len(ps.skipped)} victims had no donor"
    print(msg, file=sys.stderr)


def cmd_detect(args):
    ps = PoisonedSet.load(args.train)
    spec = _read_json(args.grid, "grid")
    if isinstance(spec, list):
        spec = {"grid": spec}
    if not isinstance(spec, dict) or not spec.get("grid"):
        raise ConfigError("grid file must hold a non-empty list of parameter objects")
    seed = args.seed if args.seed is not None else int(spec.get("seed", DEFAULT_SEED))
    k_folds = args.k_folds or int(spec.get("k_folds", 3))
    kind = args.features or spec.get("features", "physics")
    if kind not in FEATURE_SETS:
        raise ConfigError(f"unknown detector feature set: {kind}")
    candidates = [GbdtParams.from_dict({"seed": seed, **g}) for g in spec["grid"]]
    X = detector_features(ps.records.data, kind)
    search = grid_search(X, ps.labels, candidates, k_folds, seed=seed)
    model = train_gbdt(X, ps.labels, search.best, threshold=float(spec.get("threshold", 0.5)))
    train_cm = classification_metrics(model.predict(X), ps.labels)
    out = {
        "model": model.to_dict(),
        "features": kind,
        "best_params": asdict(search.best),
        "cv_mean_f1": search.scores,
        "train_metrics": train_cm.as_dict(),
        "seed": seed,
    }
    _write(args.out, dump_json(out))
    print(f"best params {asdict(search.best)}; cv F1 {max(search.scores):.4f}", file=sys.stderr)


def cmd_experiment(args):
    cfg = load_experiment(args.config, seed=args.seed)
    report = run_experiment(cfg, include_sweeps=not args.no_sweeps, include_plots=not args.no_plots)
    report.save(args.out)
    text = report.to_text()
    if args.text:
        Path(args.text).write_text(text, encoding="utf-8")
    sys.stderr.write(text)


def cmd_sweep(args):
    cfg = load_experiment(args.config, seed=args.seed)
    ctx = prepare(cfg)
    out = {"epsilon": sweep_epsilon(cfg, args.epsilons or cfg.epsilons, ctx=ctx)}
    if args.fractions:
        out["fraction"] = sweep_fraction(cfg, args.fractions, ctx=ctx)
    out["provenance"] = {"config_hash": cfg.config_hash(), "seed": cfg.seed}
    _write(args.out, dump_json(out))


def cmd_plot_data(args):
    if args.report:
        source = _read_json(args.report, "report")
        if not isinstance(source, dict):
            raise DataError(f"{args.report} is not an experiment report")
    else:
        source = load_csv(args.data)
    _write(args.out, dump_json({"kind": args.kind, "data": emit_plot_data(source, args.kind)}))


def build_parser():
    p = argparse.ArgumentParser(prog="mimo-poison", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def seed_arg(sp):
        sp.add_argument("--seed", type=int, default=None, help="overrides any seed in the config")

    def split_arg(sp):
        sp.add_argument("--split", type=_ratios, default=(0.4, 0.4, 0.2),
                        help="train,pool,test ratios (default 0.4,0.4,0.2)")

    sp = sub.add_parser("generate", help="generate a synthetic scenario dataset")
    sp.add_argument("--scene", help="scene JSON (default: built-in urban scene)")
    sp.add_argument("--out", required=True)
    seed_arg(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train", help="fit the pathloss regressor on the train split")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--full", action="store_true", help="fit on every record instead of the train split")
    sp.add_argument("--no-standardize", action="store_true")
    seed_arg(sp)
    split_arg(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="MSE and R^2 of a model on one split part")
    sp.add_argument("--data", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--part", choices=("train", "pool", "test", "all"), default="test")
    sp.add_argument("--out")
    seed_arg(sp)
    split_arg(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("attack", help="poison a dataset; adds an is_poisoned column")
    sp.add_argument("--data", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--config", required=True)
    sp.add_argument("--pool", help="donor CSV for the distance attack (default: the data itself)")
    sp.add_argument("--out", required=True)
    seed_arg(sp)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("detect", help="grid-search and train the poison detector")
    sp.add_argument("--train", required=True, help="CSV with an is_poisoned column")
    sp.add_argument("--grid", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--k-folds", type=int, default=None)
    sp.add_argument("--features", choices=FEATURE_SETS, default=None)
    seed_arg(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("experiment", help="run the three-scenario experiment")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--text", help="also write the aligned text tables here")
    sp.add_argument("--no-sweeps", action="store_true")
    sp.add_argument("--no-plots", action="store_true")
    seed_arg(sp)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("sweep", help="attacked-scenario metrics over epsilon (and fraction)")
    sp.add_argument("--config", required=True)
    sp.add_argument("--epsilons", type=_float_list, default=None)
    sp.add_argument("--fractions", type=_float_list, default=None)
    sp.add_argument("--out")
    seed_arg(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("plot-data", help="export plot-ready JSON")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--report")
    src.add_argument("--data", help="records CSV (histogram and correlation only)")
    sp.add_argument("--kind", required=True, choices=PLOT_KINDS)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MimoPoisonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
