"""Command-line entry point: ``aftboost {generate,train,predict,evaluate,tune}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal error.  Diagnostics and progress go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from typing import Optional

import numpy as np

from . import __version__
from .data import FOLD_COLUMN, LOWER_COLUMN, UPPER_COLUMN, Dataset, format_real, load_dataset, read_csv, write_csv
from .datagen import RIGHT_CENSORED_RECIPES, GeneratorSpec, canonical_recipe, generate
from .distributions import Distribution
from .errors import AftBoostError, ConfigError, DataError, InvalidLabelError, MetricError, ModelFormatError
from .gbt import BoostingParams, Model, Trainer
from .loss import AftParams, mean_loss_arrays
from .metrics import DEFAULT_TAU_PERCENTILE, METRICS, evaluate
from .tuning import (
    DEFAULT_ROUND_BUDGET,
    TUNABLE,
    SearchSpace,
    best_config_doc,
    make_folds,
    nested_cv,
    run_search,
    trial_log_csv,
)

log = logging.getLogger("aftboost")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

# keys accepted in a training config document, with defaults
TRAIN_DEFAULTS = {
    "aft_loss_distribution": "normal",
    "aft_loss_distribution_scale": 1.0,
    "learning_rate": 0.1,
    "max_depth": 6,
    "min_child_weight": 1.0,
    "reg_alpha": 0.001,
    "reg_lambda": 1.0,
    "num_rounds": 100,
    "max_bins": 256,
    "seed": 0,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None


def _add_csv_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lower-column", default=LOWER_COLUMN)
    p.add_argument("--upper-column", default=UPPER_COLUMN)
    p.add_argument("--labels-in-log-space", action="store_true",
                   help="label columns hold log times; they are exponentiated on load")
    p.add_argument("--drop-missing-columns", action="store_true")
    p.add_argument("--drop-zero-variance", action="store_true")


def _load(path: str, args, require_labels: bool = True, fold_column: Optional[str] = None,
          feature_columns=None) -> Dataset:
    preprocessing = None
    if args.drop_missing_columns or args.drop_zero_variance:
        preprocessing = {
            "drop_missing_columns": args.drop_missing_columns,
            "drop_zero_variance": args.drop_zero_variance,
        }
    ds, report = load_dataset(
        path, preprocessing,
        lower_column=args.lower_column, upper_column=args.upper_column,
        labels_in_log_space=args.labels_in_log_space, require_labels=require_labels,
        fold_column=fold_column, feature_columns=feature_columns,
    )
    for line in report.lines():
        log.info("%s: %s", path, line)
    return ds


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    recipe = canonical_recipe(args.recipe)
    fraction = args.censor_fraction if recipe in RIGHT_CENSORED_RECIPES else None
    ds = generate(GeneratorSpec(recipe, args.rows, fraction, args.seed))
    if args.folds:
        ds.fold_assignment = make_folds(ds.n_rows, args.folds, args.seed)
    if args.replicate > 1:
        ds = ds.replicate(args.replicate)
    write_csv(ds, args.out, fold_column=FOLD_COLUMN if args.folds else None)
    censored = float(np.mean(ds.lower != ds.upper))
    log.info("wrote %d rows (%s, censored fraction %.4f) to %s", ds.n_rows, recipe, censored, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _train_config(args) -> dict:
    values = dict(TRAIN_DEFAULTS)
    if args.config:
        doc = _read_json(args.config)
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
        if "params" in doc:
            # a best-config document written by `tune`
            params = dict(doc["params"])
            if "best_round" in doc:
                params["num_rounds"] = doc["best_round"]
            doc = params
        unknown = sorted(set(doc) - set(TRAIN_DEFAULTS))
        if unknown:
            raise ConfigError(f"{args.config}: unknown config key(s) {unknown}")
        values.update(doc)
    for key in TRAIN_DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def _params(values: dict) -> tuple[AftParams, BoostingParams]:
    try:
        dist = Distribution.parse(values["aft_loss_distribution"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    aft = AftParams(dist, float(values["aft_loss_distribution_scale"]))
    boost = BoostingParams(**{k: values[k] for k in (
        "learning_rate", "max_depth", "min_child_weight", "reg_alpha", "reg_lambda",
        "num_rounds", "max_bins", "seed")})
    return aft, boost


def cmd_train(args) -> int:
    aft, boost = _params(_train_config(args))
    train = _load(args.data, args)
    valid = _load(args.validation, args, feature_columns=train.column_names) if args.validation else None
    trainer = Trainer(train, aft, boost)
    header = ["round", "train_aft_nloglik"] + (["valid_aft_nloglik"] if valid else [])
    rows = []
    vm = np.full(valid.n_rows, trainer.base_score) if valid else None

    def record(r):
        row = [r, trainer.train_loss()]
        if valid:
            row.append(mean_loss_arrays(valid.lower, valid.upper, vm, aft))
        rows.append(row)
        log.debug("round %d: %s", r, " ".join(format_real(v) for v in row[1:]))

    record(0)
    for r in range(1, boost.num_rounds + 1):
        tree = trainer.step()
        if valid:
            tree.add_to(valid.features, vm)
        record(r)
    model = trainer.model()
    model.save(args.model_out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([row[0]] + [format_real(v) for v in row[1:]])
    if args.log_out:
        _write_text(args.log_out, buf.getvalue())
    log.info("trained %d rounds; final train aft-nloglik %s; model written to %s",
             boost.num_rounds, format_real(rows[-1][1]), args.model_out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict / evaluate


def _features_for(model: Model, args) -> Dataset:
    names = model.feature_names or None
    ds = read_csv(args.data, lower_column=args.lower_column, upper_column=args.upper_column,
                  feature_columns=names, require_labels=False, labels_in_log_space=args.labels_in_log_space)
    if ds.n_features != model.n_features:
        raise DataError(f"model expects {model.n_features} features, data has {ds.n_features}")
    return ds


def cmd_predict(args) -> int:
    model = Model.load(args.model)
    ds = _features_for(model, args)
    margins = model.predict_margin(ds.features)
    column = "predicted_margin" if args.margin else "predicted_time"
    values = margins if args.margin else np.exp(margins)
    buf = io.StringIO()
    buf.write(column + "\n")
    for v in values.tolist():
        buf.write(format_real(v) + "\n")
    _write_text(args.out, buf.getvalue())
    log.info("wrote %d predictions", ds.n_rows)
    return EXIT_OK


def _read_predictions(path: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != 1 or header[0] not in ("predicted_margin", "predicted_time"):
            raise DataError(f"{path}: expected a single predicted_margin or predicted_time column")
        values = []
        for line_no, rec in enumerate(reader, start=2):
            try:
                values.append(float(rec[0]))
            except (ValueError, IndexError):
                raise DataError(f"malformed prediction {rec!r}", row=line_no) from None
    arr = np.array(values, dtype=np.float64)
    if header[0] == "predicted_time":
        if np.any(arr <= 0):
            raise DataError(f"{path}: predicted times must be positive")
        arr = np.log(arr)
    return arr


def _metric_list(text: str) -> list:
    names = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in names if m not in METRICS]
    if bad or not names:
        raise UsageError(f"unknown metric(s) {bad}; valid names: {', '.join(METRICS)}")
    return names


def cmd_evaluate(args) -> int:
    metrics = _metric_list(args.metrics)
    if (args.model is None) == (args.predictions is None):
        raise UsageError("evaluate: give exactly one of --model or --predictions")
    if args.model:
        model = Model.load(args.model)
        ds = _load(args.data, args, feature_columns=model.feature_names or None)
        margins = model.predict_margin(ds.features)
        aft = model.aft
    else:
        ds = _load(args.data, args)
        margins = _read_predictions(args.predictions)
        if margins.shape[0] != ds.n_rows:
            raise DataError(f"{margins.shape[0]} predictions for {ds.n_rows} rows")
        try:
            dist = Distribution.parse(args.aft_loss_distribution)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        aft = AftParams(dist, args.aft_loss_distribution_scale)
    train = _load(args.train_data, args) if args.train_data else None
    report = {}
    for name in metrics:
        report[name] = evaluate(name, margins, ds, aft, train=train, tau=args.tau,
                                tau_percentile=args.tau_percentile)
    if args.format == "json":
        text = json.dumps(report, indent=1) + "\n"
    else:
        text = "".join(f"{k}\t{format_real(v)}\n" for k, v in report.items())
    _write_text(args.out, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# tune


def _space(args) -> SearchSpace:
    if args.space:
        return SearchSpace.from_doc(_read_json(args.space))
    if args.mode == "grid":
        if not args.vary:
            raise UsageError("tune: grid mode needs --vary NAME [NAME ...] or --space FILE")
        return SearchSpace.grid(args.vary)
    return SearchSpace.random(args.vary) if args.vary else SearchSpace.random()


def cmd_tune(args) -> int:
    space = _space(args)
    ds = _load(args.data, args, fold_column=args.fold_column)
    common = dict(
        mode=args.mode, n_trials=args.trials, inner_folds=args.inner_folds, metric=args.metric,
        round_budget=args.round_budget, seed=args.seed, patience=args.patience, threads=args.threads,
    )
    if args.outer_folds or args.fold_column:
        fold = ds.fold_assignment if args.fold_column else None
        result = nested_cv(ds, space, outer_folds=args.outer_folds or 0, fold=fold, **common)
        logs = [trial_log_csv(f.search, outer_fold=f.fold) for f in result.folds]
        text = logs[0] + "".join(t.split("\n", 1)[1] for t in logs[1:])
        doc = {
            "metric": result.metric,
            "mode": args.mode,
            "seed": args.seed,
            "outer": [
                {"fold": f.fold, "best_trial": f.search.best_index, "best_round": f.best_round,
                 "params": f.best_params, "test_metric": f.test_metric}
                for f in result.folds
            ],
            "mean_test_metric": result.mean,
            "stdev_test_metric": result.stdev,
        }
        best_text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
        log.info("nested CV %s: mean %s, stdev %s", result.metric, format_real(result.mean), format_real(result.stdev))
    else:
        result = run_search(ds, space, **common)
        text = trial_log_csv(result)
        best_text = best_config_doc(result, mode=args.mode, seed=args.seed)
        log.info("best trial %d: mean %s %s at round %d", result.best_index, result.metric,
                 format_real(result.best.mean_metric), result.best.best_round)
    _write_text(args.log_out, text)
    _write_text(args.best_out, best_text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aftboost", description="Gradient-boosted AFT survival regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="write a synthetic censored dataset")
    g.add_argument("--recipe", required=True)
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--censor-fraction", type=float, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--replicate", type=int, default=1, help="stack this many copies of every row")
    g.add_argument("--folds", type=int, default=0, help="add a fold column with this many folds")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit a model")
    t.add_argument("--data", required=True)
    t.add_argument("--validation")
    t.add_argument("--config", help="JSON document of hyperparameters")
    t.add_argument("--model-out", required=True)
    t.add_argument("--log-out", help="per-round aft-nloglik CSV")
    t.add_argument("--aft-loss-distribution", dest="aft_loss_distribution")
    t.add_argument("--aft-loss-distribution-scale", dest="aft_loss_distribution_scale", type=float)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--max-depth", type=int)
    t.add_argument("--min-child-weight", type=float)
    t.add_argument("--reg-alpha", type=float)
    t.add_argument("--reg-lambda", type=float)
    t.add_argument("--num-rounds", type=int)
    t.add_argument("--max-bins", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--threads", type=int, default=1, help="accepted for symmetry; training is single-threaded")
    _add_csv_options(t)
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict survival times or log margins")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--margin", action="store_true", help="emit log-scale margins instead of times")
    _add_csv_options(p)
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="score predictions against labels")
    e.add_argument("--model")
    e.add_argument("--predictions")
    e.add_argument("--data", required=True)
    e.add_argument("--train-data", help="rows for the censoring distribution of uno_c (default: --data)")
    e.add_argument("--metrics", default="interval_accuracy,aft_nloglik")
    e.add_argument("--tau", type=float, default=None)
    e.add_argument("--tau-percentile", type=float, default=DEFAULT_TAU_PERCENTILE)
    e.add_argument("--aft-loss-distribution", default="normal", help="for aft_nloglik with --predictions")
    e.add_argument("--aft-loss-distribution-scale", type=float, default=1.0)
    e.add_argument("--format", choices=("text", "json"), default="text")
    e.add_argument("--out")
    _add_csv_options(e)
    e.set_defaults(func=cmd_evaluate)

    u = sub.add_parser("tune", help="hyperparameter search, optionally nested")
    u.add_argument("--data", required=True)
    u.add_argument("--space", help="JSON search-space document")
    u.add_argument("--mode", choices=("grid", "random"), default="random")
    u.add_argument("--trials", type=int, default=100)
    u.add_argument("--vary", nargs="+", choices=TUNABLE, metavar="NAME")
    u.add_argument("--inner-folds", type=int, default=5)
    u.add_argument("--outer-folds", type=int, default=0, help="0 runs a single search without an outer loop")
    u.add_argument("--fold-column", help="take outer folds from this CSV column")
    u.add_argument("--metric", choices=METRICS, default="interval_accuracy")
    u.add_argument("--round-budget", type=int, default=DEFAULT_ROUND_BUDGET)
    u.add_argument("--patience", type=int, default=None)
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--threads", type=int, default=1)
    u.add_argument("--log-out", required=True)
    u.add_argument("--best-out", required=True)
    _add_csv_options(u)
    u.set_defaults(func=cmd_tune)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("aftboost: %(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    try:
        args = parser.parse_args(argv)
        log.setLevel(logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO)
        if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (DataError, InvalidLabelError, ModelFormatError, MetricError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except AftBoostError as exc:
        log.error("%s", exc)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.error("internal error: %r", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
