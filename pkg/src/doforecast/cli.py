"""Command-line front end: ``doforecast {synth,clean,train,evaluate,compare}``.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import clean_zeros, load_csv, make_windows, split, synth_series, write_csv
from .errors import ConfigError, DataError, DimensionError, ForecastError, TrainingDivergence
from .evaluation import (
    MeanForecaster,
    PerfectOracle,
    RetrainContext,
    WalkForwardPlan,
    rank_reports,
    report_emit,
    report_read,
    walk_forward_evaluate,
)
from .experiment import (
    ExperimentConfig,
    file_fingerprint,
    parse_config_file,
    resolve_config,
    write_manifest,
)
from .models import MODEL_KINDS, build_model
from .serialize import load_model, save_model
from .training import Scaler, scaler_fit, train

logger = logging.getLogger("doforecast")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class UsageError(ForecastError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _value_column(spec: str):
    try:
        return int(spec)
    except ValueError:
        return spec


def prepare_series(data_path, cfg: ExperimentConfig):
    """clean -> split -> scaler fitted on the training partition."""
    raw = load_csv(data_path, value_column=_value_column(cfg.value_column))
    cleaned, report = clean_zeros(raw)
    train_part, test_part = split(cleaned, cfg.train_frac, min_len=cfg.in_len + cfg.out_len)
    scaler = scaler_fit(train_part)
    return train_part, test_part, scaler, report


# -- synth -----------------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        series = synth_series(args.kind, args.length, seed=0 if args.seed is None else args.seed,
                              amplitude=args.amplitude, period=args.period, offset=args.offset, phi=args.phi,
                              sigma=args.sigma, zeros=args.zeros)
    except DataError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out) if args.out else _out_dir(args) / "synth.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(series, out)
    print(out)
    return EXIT_OK


# -- clean -----------------------------------------------------------------

def cmd_clean(args) -> int:
    raw = load_csv(args.data, value_column=_value_column(args.value_column))
    cleaned, report = clean_zeros(raw)
    out = Path(args.out) if args.out else _out_dir(args) / "cleaned.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(cleaned, out)
    print(report.to_json())
    return EXIT_OK


# -- train -----------------------------------------------------------------

_TRAIN_FLAGS = ("model", "epochs", "batch_size", "validation_split", "lr", "beta1", "beta2",
                "eps", "seed", "shuffle", "units", "cnn_filters", "cnn_kernel", "pool_size",
                "tcn_dilations", "tcn_kernel", "tcn_filters", "tcn_dropout", "in_len",
                "out_len", "train_frac", "value_column")


def _resolve(args) -> ExperimentConfig:
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    flags = {k: getattr(args, k) for k in _TRAIN_FLAGS if getattr(args, k, None) is not None}
    return resolve_config(file_values, flags)


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    started = _now()
    cfg = _resolve(args)
    if not args.data:
        raise UsageError("train needs --data")
    out = _out_dir(args)
    fingerprint = file_fingerprint(args.data)
    train_part, _, scaler, report = prepare_series(args.data, cfg)
    dataset = make_windows(scaler.apply(train_part.values), cfg.in_len, cfg.out_len)
    model = build_model(cfg.model, cfg.in_len, cfg.out_len, seed=cfg.seed,
                        **cfg.model_hyperparams())
    t_train = time.perf_counter()
    model, history = train(model, dataset, cfg.train_config())
    train_seconds = time.perf_counter() - t_train

    model_path = out / "model.params"
    history_path = out / "history.csv"
    save_model(model_path, model, {
        "scaler": {"min": scaler.min, "max": scaler.max},
        "data_fingerprint": fingerprint,
        "experiment": cfg.to_dict(),
    })
    history.to_csv(history_path)
    manifest_path = out / "manifest.json"
    write_manifest(manifest_path, "train", {**cfg.to_dict(), "model_config": model.config()},
                   fingerprint,
                   {"started": started, "train_seconds": train_seconds,
                    "total_seconds": time.perf_counter() - t0},
                   [model_path.name, history_path.name, manifest_path.name])
    last = history.records[-1] if history.records else None
    logger.info("trained %s on %d windows (%d zeros removed); final train loss %s",
                cfg.model, len(dataset), report.removed_count,
                f"{last.train_loss:.6g}" if last else "n/a")
    print(model_path)
    return EXIT_OK


# -- evaluate --------------------------------------------------------------

def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    started = _now()
    if not args.data:
        raise UsageError("evaluate needs --data")
    if not args.model_file and not args.oracle and not args.mean_baseline:
        raise UsageError("evaluate needs --model-file (or --oracle / --mean-baseline)")
    if args.model_id and len(args.model_file or []) > 1:
        raise UsageError("--model-id only applies to a single --model-file")
    out = _out_dir(args)
    fingerprint = file_fingerprint(args.data)

    entries = []
    for path in args.model_file or []:
        model, meta = load_model(path)
        if meta.get("data_fingerprint") != fingerprint:
            raise DataError(f"{path} was trained on different data "
                            f"({meta.get('data_fingerprint')} vs {fingerprint})")
        cfg = resolve_config(meta.get("experiment", {}))
        entries.append((args.model_id or model.kind, model, Scaler(**meta["scaler"]), cfg))

    if args.oracle or args.mean_baseline:
        cfg = _resolve(args)
        train_part, test_part, scaler, _ = prepare_series(args.data, cfg)
        if args.oracle:
            oracle = PerfectOracle(scaler.apply(test_part.values), cfg.in_len, cfg.out_len)
            entries.append(("oracle", oracle, scaler, cfg))
        if args.mean_baseline:
            level = float(np.mean(scaler.apply(train_part.values)))
            entries.append(("mean", MeanForecaster(level, cfg.in_len, cfg.out_len), scaler, cfg))

    ids = [e[0] for e in entries]
    if len(set(ids)) != len(ids):
        raise UsageError(f"duplicate model identifiers: {ids}")

    reports = []
    for model_id, model, scaler, cfg in entries:
        train_part, test_part, _, _ = prepare_series(args.data, cfg)
        plan = WalkForwardPlan(cfg.in_len, cfg.out_len, args.step, args.retrain_per_fold)
        context = None
        if args.retrain_per_fold:
            tc = cfg.train_config()
            tc.epochs = args.retrain_epochs
            context = RetrainContext(scaler.apply(train_part.values), tc)
        _, report = walk_forward_evaluate(model, scaler, test_part, plan, context, model_id)
        reports.append(report)
        logger.info("%s: rmse h1=%.4g h%d=%.4g over %d folds", model_id, report.rmse[0],
                    report.out_len, report.rmse[-1], report.fold_count)

    csv_path = report_emit(reports, "csv", out / "report.csv")
    json_path = report_emit(reports, "json", out / "report.json")
    manifest_path = out / "manifest.json"
    write_manifest(manifest_path, "evaluate",
                   {"models": ids, "model_files": [str(p) for p in args.model_file or []],
                    "step": args.step, "retrain_per_fold": args.retrain_per_fold},
                   fingerprint, {"started": started, "total_seconds": time.perf_counter() - t0},
                   [csv_path.name, json_path.name, manifest_path.name])
    print(csv_path)
    return EXIT_OK


# -- compare ---------------------------------------------------------------

def cmd_compare(args) -> int:
    reports = []
    seen = {}
    for i, path in enumerate(args.reports):
        for rep in report_read(path):
            if rep.model in seen:
                rep.model = f"{rep.model}[{i}]"
            seen[rep.model] = path
            reports.append(rep)
    rows = rank_reports(reports)
    out = _out_dir(args)
    path = out / "ranking.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scope", "metric", "horizon_step", "model", "value", "rank"])
        for r in rows:
            w.writerow([r["scope"], r["metric"], r["horizon_step"], r["model"],
                        repr(r["value"]), r["rank"]])
    means = [r for r in rows if r["scope"] == "mean"]
    print(f"{'metric':<6} {'rank':>4}  {'model':<12} {'mean over horizons':>18}")
    for r in means:
        print(f"{r['metric']:<6} {r['rank']:>4}  {r['model']:<12} {r['value']:>18.6g}")
    print(path)
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def _add_common(p, data=True):
    p.add_argument("--config", help="key=value experiment file (flags override it)")
    p.add_argument("--seed", type=int, default=None, help="root seed for every random stream")
    p.add_argument("--out-dir", default=".", help="directory for output artifacts")
    if data:
        p.add_argument("--data", help="input CSV (optional header; value in the last column)")


def _add_experiment_flags(p):
    p.add_argument("--model", choices=MODEL_KINDS, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--validation-split", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--beta1", type=float, default=None)
    p.add_argument("--beta2", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--shuffle", choices=("true", "false"), default=None)
    p.add_argument("--units", type=int, default=None)
    p.add_argument("--cnn-filters", type=int, default=None)
    p.add_argument("--cnn-kernel", type=int, default=None)
    p.add_argument("--pool-size", type=int, default=None)
    p.add_argument("--tcn-dilations", default=None, help="comma list, e.g. 1,2,4,8,16,32")
    p.add_argument("--tcn-kernel", type=int, default=None)
    p.add_argument("--tcn-filters", type=int, default=None)
    p.add_argument("--tcn-dropout", type=float, default=None)
    p.add_argument("--in-len", type=int, default=None)
    p.add_argument("--out-len", type=int, default=None)
    p.add_argument("--train-frac", type=float, default=None)
    p.add_argument("--value-column", default=None, help="column index or header name")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doforecast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a deterministic synthetic series")
    _add_common(p, data=False)
    p.add_argument("--kind", choices=("sine", "ar1", "composite"), default="composite")
    p.add_argument("--length", type=int, default=10_000)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--period", type=float, default=48.0, help="samples per cycle")
    p.add_argument("--offset", type=float, default=8.0)
    p.add_argument("--phi", type=float, default=0.95, help="AR(1) coefficient, |phi| < 1")
    p.add_argument("--sigma", type=float, default=0.1, help="AR(1) innovation std")
    p.add_argument("--zeros", type=int, default=0, help="inject this many 0.0 readings")
    p.add_argument("--out", help="output path (default <out-dir>/synth.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("clean", help="remove zero readings; print the report as JSON")
    _add_common(p)
    p.add_argument("--value-column", default="-1")
    p.add_argument("--out", help="output path (default <out-dir>/cleaned.csv)")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("train", help="clean, split, scale, window and train one model")
    _add_common(p)
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="walk-forward evaluation over the test partition")
    _add_common(p)
    _add_experiment_flags(p)
    p.add_argument("--model-file", nargs="+", help="one or more model.params files")
    p.add_argument("--model-id", help="label for a single model in the report")
    p.add_argument("--step", type=int, default=None, help="fold advance (default out_len)")
    p.add_argument("--retrain-per-fold", action="store_true")
    p.add_argument("--retrain-epochs", type=int, default=1)
    p.add_argument("--oracle", action="store_true",
                   help="add a perfect-foresight stub model (harness check)")
    p.add_argument("--mean-baseline", action="store_true",
                   help="add the constant training-mean predictor")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="rank models across report files")
    _add_common(p, data=False)
    p.add_argument("--reports", nargs="+", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "shuffle", None) is not None:
        args.shuffle = args.shuffle == "true"
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergence, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DimensionError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
