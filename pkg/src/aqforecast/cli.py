"""Command-line front end: every stage of the pipeline as a subcommand.

Exit codes: 0 success, 1 usage error (bad arguments or config file), 2 data
error (unreadable or malformed inputs), 3 numerical failure (a model blew
up). All human-readable messages go to standard error; structured results
go to files under --out-dir, or to standard output for `evaluate`.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .arima import ArimaError, default_order, fit as arima_fit, \
    forecast as arima_forecast, save_model
from .decompose import DecompositionError, stl_decompose, \
    write_components_csv
from .ingest import IngestError, clean_pipeline, write_table_csv
from .pipeline import PipelineConfig, PipelineError, _parse_order, mae, \
    mse, r2, read_config, read_predictions_csv, rmse, run_forecast, \
    tune as tune_pipeline, write_config
from .residualnet import NetError, make_windows, save_params, train, \
    write_train_report
from .series import read_series_csv, write_series_csv
from .uammo import UammoError, export_best, write_history_csv

_NUMERICAL = (ArimaError, NetError, DecompositionError, UammoError)


class UsageError(Exception):
    """Bad command line or unusable configuration file."""


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exceptions, not sys.exit."""

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: {message}")


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="pipeline config file (key = value sections)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the net and optimizer seeds")
    common.add_argument("--out-dir", default=argparse.SUPPRESS,
                        help="directory for emitted artifacts")

    parser = _Parser(prog="aqforecast", parents=[common],
                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("ingest", parents=[common],
                       help="clean raw station CSVs into an hourly table")
    p.add_argument("inputs", nargs="+", help="raw CSV files (shared schema)")
    p.add_argument("--target", required=True,
                   help="pollutant column to winsorize and extract")
    p.add_argument("--threshold", type=float, default=0.6,
                   help="minimum presence fraction to keep a column")
    p.add_argument("--iqr-k", type=float, default=1.5,
                   help="IQR fence multiplier for outlier clipping")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("decompose", parents=[common],
                       help="split a series into trend/seasonal/residual")
    p.add_argument("series", help="series CSV (timestamp,value)")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("fit-arima", parents=[common],
                       help="fit one ARIMA model to a series")
    p.add_argument("series", help="series CSV (timestamp,value)")
    p.add_argument("--order", help="p,d,q (overrides --pollutant)")
    p.add_argument("--pollutant",
                   help="use the reference order for this pollutant")
    p.add_argument("--horizon", type=int,
                   help="also forecast this many steps ahead")
    p.set_defaults(func=_cmd_fit_arima)

    p = sub.add_parser("train-residual", parents=[common],
                       help="train the attention net on a residual series")
    p.add_argument("series", help="residual series CSV (timestamp,value)")
    p.set_defaults(func=_cmd_train_residual)

    p = sub.add_parser("forecast", parents=[common],
                       help="run the full hybrid pipeline on a series")
    p.add_argument("series", help="series CSV (timestamp,value)")
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("tune", parents=[common],
                       help="search hyperparameters with the optimizer")
    p.add_argument("series", help="series CSV (timestamp,value)")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("evaluate", parents=[common],
                       help="metrics between an actual and a predicted CSV")
    p.add_argument("actual", help="truth series CSV (timestamp,value)")
    p.add_argument("predicted", help="prediction series CSV")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", parents=[common],
                       help="derive plot-data files from a finished run")
    p.add_argument("run_dir", help="directory holding predictions.csv")
    p.set_defaults(func=_cmd_report)
    return parser


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def _load_config(args) -> PipelineConfig:
    path = getattr(args, "config", None)
    if path is not None:
        config = read_config(path)
    else:
        config = PipelineConfig()
    out_dir = getattr(args, "out_dir", None)
    if out_dir is not None:
        config = replace(config, out_dir=str(out_dir))
    seed = getattr(args, "seed", None)
    if seed is not None:
        config = replace(config, net=replace(config.net, seed=seed),
                         optimizer=replace(config.optimizer, seed=seed))
    return config


def _out_dir(config: PipelineConfig) -> Path:
    out = Path(config.out_dir) if config.out_dir is not None else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_ingest(args, config: PipelineConfig) -> int:
    table, target = clean_pipeline(args.inputs, args.target,
                                   args.threshold, args.iqr_k)
    out = _out_dir(config)
    write_table_csv(out / "clean.csv", table)
    write_series_csv(out / "target.csv", target)
    _say(f"ingest: {len(table.rows)} hourly rows, "
         f"{len(table.column_names)} columns -> {out / 'clean.csv'}")
    return 0


def _cmd_decompose(args, config: PipelineConfig) -> int:
    series = read_series_csv(args.series)
    decomp = stl_decompose(series, config.period, config.trend_loess,
                           config.seasonal_loess)
    out = _out_dir(config)
    write_components_csv(out / "decomposition.csv", decomp)
    _say(f"decompose: period {config.period}, {len(series)} points "
         f"-> {out / 'decomposition.csv'}")
    return 0


def _resolve_order(args, config: PipelineConfig):
    if args.order:
        return _parse_order(args.order, "--order")
    if args.pollutant:
        order = default_order(args.pollutant)
        if order is None:
            raise UsageError(f"no reference order for pollutant "
                             f"{args.pollutant!r}; pass --order p,d,q")
        return order
    return config.trend_order


def _cmd_fit_arima(args, config: PipelineConfig) -> int:
    series = read_series_csv(args.series)
    order = _resolve_order(args, config)
    model = arima_fit(series, order)
    out = _out_dir(config)
    save_model(out / "arima.json", model)
    _say(f"fit-arima: order ({order.p},{order.d},{order.q}), "
         f"sigma2 {model.sigma2:.6g} -> {out / 'arima.json'}")
    if args.horizon is not None:
        fc = arima_forecast(model, args.horizon)
        write_series_csv(out / "forecast.csv", fc)
        _say(f"fit-arima: {args.horizon}-step forecast "
             f"-> {out / 'forecast.csv'}")
    return 0


def _cmd_train_residual(args, config: PipelineConfig) -> int:
    series = read_series_csv(args.series)
    data = make_windows(series, config.net.window)
    params, report = train(config.net, data)
    out = _out_dir(config)
    save_params(out / "residual_net.npz", params)
    write_train_report(out / "train_report.csv", report)
    _say(f"train-residual: best val MSE {report.best_val_mse:.6g} at epoch "
         f"{report.best_epoch} -> {out / 'residual_net.npz'}")
    return 0


def _cmd_forecast(args, config: PipelineConfig) -> int:
    series = read_series_csv(args.series, name=config.pollutant)
    if config.out_dir is None:
        config = replace(config, out_dir=".")
    report = run_forecast(config, series)
    _say(f"forecast: RMSE {report.rmse:.4f}, MAE {report.mae:.4f}, "
         f"R2 {report.r2:.4f} over {report.horizon} test steps")
    _say(f"forecast: report -> {report.paths['report']}")
    return 0


def _cmd_tune(args, config: PipelineConfig) -> int:
    series = read_series_csv(args.series, name=config.pollutant)
    if not config.tune_enabled or not config.tunable:
        raise UsageError("tuning needs a config file with [tuning] "
                         "enabled = true and a dims list")
    best, history = tune_pipeline(config, series)
    out = _out_dir(config)
    write_config(out / "best_config.ini", best)
    write_history_csv(out / "tuning_history.csv", history)
    _say(f"tune: best validation MSE {history[-1].best_j:.6g} after "
         f"{history[-1].iteration} iterations -> {out / 'best_config.ini'}")
    return 0


def _cmd_evaluate(args, config: PipelineConfig) -> int:
    actual = read_series_csv(args.actual)
    predicted = read_series_csv(args.predicted)
    if not actual.same_grid(predicted):
        raise IngestError("actual and predicted series are not on the "
                          "same time grid")
    metrics = {"RMSE": rmse(actual.values, predicted.values),
               "MAE": mae(actual.values, predicted.values),
               "R2": r2(actual.values, predicted.values),
               "MSE": mse(actual.values, predicted.values),
               "n": len(actual)}
    text = json.dumps(metrics, indent=2, sort_keys=True)
    print(text)
    if config.out_dir is not None:
        out = _out_dir(config)
        (out / "metrics.json").write_text(text + "\n", encoding="utf-8")
        _say(f"evaluate: metrics -> {out / 'metrics.json'}")
    return 0


def _cmd_report(args, config: PipelineConfig) -> int:
    run_dir = Path(args.run_dir)
    pred_path = run_dir / "predictions.csv"
    if not pred_path.exists():
        raise IngestError(f"no predictions.csv under {run_dir}")
    data = read_predictions_csv(pred_path)
    out = _out_dir(config) if config.out_dir is not None else run_dir

    with open(out / "plot_series.csv", "w", encoding="utf-8") as fh:
        fh.write("timestamp,actual,y_hat\n")
        for ts, a, y in zip(data["timestamp"], data["actual"],
                            data["y_hat"]):
            fh.write(f"{ts.isoformat()},{a:.10g},{y:.10g}\n")
    with open(out / "plot_errors.csv", "w", encoding="utf-8") as fh:
        fh.write("timestamp,error\n")
        for ts, a, y in zip(data["timestamp"], data["actual"],
                            data["y_hat"]):
            fh.write(f"{ts.isoformat()},{a - y:.10g}\n")

    summary = {"n": len(data["actual"]),
               "RMSE": rmse(data["actual"], data["y_hat"]),
               "MAE": mae(data["actual"], data["y_hat"]),
               "MSE": mse(data["actual"], data["y_hat"]),
               "R2": r2(data["actual"], data["y_hat"])}
    report_path = run_dir / "report.json"
    if report_path.exists():
        with open(report_path, "r", encoding="utf-8") as fh:
            summary["run_report"] = json.load(fh)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(f"report: plot data and summary -> {out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _say(str(exc))
        return 1
    except SystemExit as exc:  # --help prints and leaves through here
        return int(exc.code or 0)

    try:
        config = _load_config(args)
    except (UsageError, PipelineError) as exc:
        _say(f"aqforecast: {exc}")
        _say(parser.format_usage().rstrip())
        return 1

    try:
        return args.func(args, config)
    except UsageError as exc:
        _say(f"aqforecast: {exc}")
        return 1
    except _NUMERICAL as exc:
        _say(f"aqforecast: numerical failure: {exc}")
        return 3
    except PipelineError as exc:
        if isinstance(exc.__cause__, _NUMERICAL):
            _say(f"aqforecast: numerical failure: {exc}")
            return 3
        _say(f"aqforecast: data error: {exc}")
        return 2
    except (IngestError, FileNotFoundError, OSError, ValueError) as exc:
        _say(f"aqforecast: data error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
