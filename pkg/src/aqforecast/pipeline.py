"""End-to-end hybrid forecasting: decompose, model each part, recombine.

A run splits the series chronologically, decomposes the training portion
into trend + seasonal + residual, forecasts trend and seasonal with ARIMA,
forecasts the residual with the attention network one step ahead, and sums
the three parts. Reports carry RMSE/MAE/R2/MSE on the held-out test split
plus a per-component diagnostic breakdown, and every artifact lands as a
flat CSV or a JSON report so runs can be compared from files alone.
"""

from __future__ import annotations

import configparser
import json
import math
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .arima import ArimaModel, ArimaOrder, fit as arima_fit, \
    forecast as arima_forecast, save_model
from .decompose import DecomposedSeries, LoessConfig, stl_decompose, \
    write_components_csv
from .residualnet import NetConfig, make_windows, predict_windows, \
    save_params, train, write_train_report
from .series import TimeSeries
from .uammo import Dim, OptimizerConfig, SearchSpace, optimize

__all__ = [
    "PipelineError",
    "PipelineConfig",
    "ForecastReport",
    "KERNEL_SETS",
    "TUNABLE_DIMS",
    "mse",
    "rmse",
    "mae",
    "r2",
    "synthetic_benchmark",
    "split_lengths",
    "run_forecast",
    "arima_only_forecast",
    "net_only_forecast",
    "tune",
    "read_config",
    "write_config",
    "write_predictions_csv",
    "read_predictions_csv",
]


class PipelineError(ValueError):
    """Raised for bad pipeline configuration or a failed pipeline stage."""


# Kernel-size sets selectable during tuning; filters are kept per-branch.
KERNEL_SETS = ((3,), (3, 5), (3, 5, 7), (5, 7, 9))

# Name -> search bounds for every hyperparameter the tuner may touch.
TUNABLE_DIMS = {
    "learning_rate": Dim("learning_rate", 1e-4, 0.1),
    "bilstm_units": Dim("bilstm_units", 4, 64, "integer"),
    "batch_size": Dim("batch_size", 8, 128, "integer"),
    "filters_scale": Dim("filters_scale", 1, 8, "integer"),
    "kernel_set": Dim("kernel_set", 0, len(KERNEL_SETS) - 1, "categorical"),
    "window": Dim("window", 8, 48, "integer"),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one forecast run needs, from split fractions to tuning."""

    pollutant: str = "PM2.5"
    trend_order: ArimaOrder = ArimaOrder(1, 1, 1)
    seasonal_order: ArimaOrder = ArimaOrder(2, 0, 1)
    period: int = 24
    trend_loess: LoessConfig | None = None
    seasonal_loess: LoessConfig | None = None
    net: NetConfig = field(default_factory=NetConfig)
    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15
    tune_enabled: bool = False
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    tunable: tuple = ()
    tune_epoch_cap: int = 30
    out_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tunable", tuple(self.tunable))
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise PipelineError("split fractions must all be positive, got "
                                f"{fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise PipelineError(f"split fractions must sum to 1, got {fracs}")
        if self.period < 2:
            raise PipelineError(f"period must be >= 2, got {self.period}")
        if self.tune_epoch_cap < 1:
            raise PipelineError("tune_epoch_cap must be >= 1")
        for name in self.tunable:
            if name not in TUNABLE_DIMS:
                raise PipelineError(
                    f"unknown tunable dimension {name!r}; expected a subset "
                    f"of {sorted(TUNABLE_DIMS)}")


@dataclass
class ForecastReport:
    """Test-split metrics plus a diagnostic per-component breakdown."""

    pollutant: str
    horizon: int
    rmse: float
    mae: float
    r2: float
    mse: float
    breakdown: dict
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if abs(self.rmse ** 2 - self.mse) > 1e-9 * max(abs(self.mse), 1e-30):
            raise PipelineError("report inconsistent: rmse^2 != mse")
        if self.r2 > 1.0:
            raise PipelineError(f"r2 cannot exceed 1, got {self.r2}")

    def to_dict(self) -> dict:
        return {
            "pollutant": self.pollutant,
            "horizon": self.horizon,
            "metrics": {"RMSE": self.rmse, "MAE": self.mae,
                        "R2": self.r2, "MSE": self.mse},
            "breakdown": dict(self.breakdown),
            "artifacts": dict(self.paths),
        }


def _paired(y, y_hat):
    a = np.asarray(y, dtype=float)
    b = np.asarray(y_hat, dtype=float)
    if a.ndim != 1 or b.ndim != 1:
        raise PipelineError("metrics expect 1-D inputs")
    if a.shape != b.shape:
        raise PipelineError(f"length mismatch: {a.shape[0]} actuals vs "
                            f"{b.shape[0]} predictions")
    if a.shape[0] < 2:
        raise PipelineError("metrics need at least 2 points")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise PipelineError("metrics inputs must be finite")
    return a, b


def mse(y, y_hat) -> float:
    """Mean squared error."""
    a, b = _paired(y, y_hat)
    return float(np.mean((a - b) ** 2))


def rmse(y, y_hat) -> float:
    """Root mean squared error."""
    return math.sqrt(mse(y, y_hat))


def mae(y, y_hat) -> float:
    """Mean absolute error."""
    a, b = _paired(y, y_hat)
    return float(np.mean(np.abs(a - b)))


def r2(y, y_hat) -> float:
    """Coefficient of determination, 1 - SSE/SST."""
    a, b = _paired(y, y_hat)
    sst = float(np.sum((a - a.mean()) ** 2))
    if sst == 0.0:
        raise PipelineError("r2 is undefined for constant actuals")
    sse = float(np.sum((a - b) ** 2))
    return 1.0 - sse / sst


def synthetic_benchmark(n: int = 4000, seed: int = 0, slope: float = 0.01,
                        amplitude: float = 5.0, period: float = 24.0,
                        ar_coeff: float = 0.7, noise_std: float = 1.0,
                        start: datetime = datetime(2021, 1, 1),
                        name: str = "synthetic") -> TimeSeries:
    """Hourly benchmark series: linear trend + daily sine + AR(1) noise."""
    if n < 2:
        raise PipelineError(f"benchmark length must be >= 2, got {n}")
    rng = np.random.default_rng(seed)
    burn = 200
    eps = rng.normal(0.0, noise_std, n + burn)
    ar_part = lfilter([1.0], [1.0, -ar_coeff], eps)[burn:]
    t = np.arange(n)
    values = slope * t + amplitude * np.sin(2.0 * np.pi * t / period) + ar_part
    return TimeSeries(start, 1.0, values, name)


def split_lengths(config: PipelineConfig, n: int) -> tuple:
    """(train, validation, test) lengths for a chronological split of n."""
    n_train = int(math.floor(config.train_frac * n))
    n_val = int(math.floor(config.val_frac * n))
    n_test = n - n_train - n_val
    if n_test < 2:
        raise PipelineError(f"test split has {n_test} points; need at least 2")
    if n_train < 1 or n_val < 1:
        raise PipelineError("train and validation splits must be non-empty")
    return n_train, n_val, n_test


@contextmanager
def _stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(f"{name} stage failed: {exc}") from exc


def _one_step_windows(history: np.ndarray, future: np.ndarray,
                      window: int) -> np.ndarray:
    """Windows of the last ``window`` values preceding each future step."""
    joined = np.concatenate([history, future])
    n_hist = history.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(joined, window)
    return view[n_hist - window:n_hist - window + future.shape[0]]


def run_forecast(config: PipelineConfig, series: TimeSeries
                 ) -> ForecastReport:
    """Full hybrid run on one series; writes artifacts when out_dir is set."""
    n = len(series)
    n_train, n_val, n_test = split_lengths(config, n)
    n_fit = n_train + n_val
    window = config.net.window
    if n_fit < 2 * config.period + window:
        raise PipelineError(
            f"training portion of {n_fit} points is shorter than two "
            f"periods ({config.period}) plus the window ({window})")

    with _stage("decomposition"):
        decomp = stl_decompose(series.slice(0, n_fit), config.period,
                               config.trend_loess, config.seasonal_loess)

    with _stage("trend ARIMA"):
        trend_model = arima_fit(decomp.trend, config.trend_order)
        trend_hat = arima_forecast(trend_model, n_test)
    with _stage("seasonal ARIMA"):
        seasonal_model = arima_fit(decomp.seasonal, config.seasonal_order)
        seasonal_hat = arima_forecast(seasonal_model, n_test)

    y_test = series.values[n_fit:]
    pseudo_residual = y_test - trend_hat.values - seasonal_hat.values

    params = None
    train_report = None
    with _stage("residual network"):
        data = make_windows(decomp.residual, window)
        if data.degenerate:
            warnings.warn("residual component is degenerate (zero training "
                          "variance); falling back to a zero residual "
                          "forecast")
            residual_hat = np.zeros(n_test)
        else:
            params, train_report = train(config.net, data)
            wins = _one_step_windows(decomp.residual.values,
                                     pseudo_residual, window)
            residual_hat = predict_windows(params, wins)

    y_hat = trend_hat.values + seasonal_hat.values + residual_hat

    with _stage("metrics"):
        run_mse = mse(y_test, y_hat)
        report = ForecastReport(
            pollutant=config.pollutant,
            horizon=n_test,
            rmse=math.sqrt(run_mse),
            mae=mae(y_test, y_hat),
            r2=r2(y_test, y_hat),
            mse=run_mse,
            breakdown=_breakdown(config, series, n_fit, trend_hat.values,
                                 seasonal_hat.values, residual_hat),
        )

    if config.out_dir is not None:
        with _stage("artifacts"):
            report.paths = _write_artifacts(
                config, series, n_fit, decomp, trend_model, seasonal_model,
                trend_hat, seasonal_hat, residual_hat, y_hat, params,
                train_report, report)
    return report


def _breakdown(config: PipelineConfig, series: TimeSeries, n_fit: int,
               trend_hat: np.ndarray, seasonal_hat: np.ndarray,
               residual_hat: np.ndarray) -> dict:
    """Diagnostic per-component RMSEs against a full-series decomposition.

    The reference decomposition covers the whole series, including the test
    range, so this is attribution only: forecasts never see it.
    """
    full = stl_decompose(series, config.period, config.trend_loess,
                         config.seasonal_loess)
    return {
        "trend_rmse": rmse(full.trend.values[n_fit:], trend_hat),
        "seasonal_rmse": rmse(full.seasonal.values[n_fit:], seasonal_hat),
        "residual_rmse": rmse(full.residual.values[n_fit:], residual_hat),
    }


def write_predictions_csv(path, timestamps, actual, trend_hat, seasonal_hat,
                          residual_hat, y_hat) -> None:
    """Per-step test forecasts next to the truth, one row per timestamp."""
    columns = [np.asarray(c, dtype=float) for c in
               (actual, trend_hat, seasonal_hat, residual_hat, y_hat)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,actual,trend_hat,seasonal_hat,residual_hat,"
                 "y_hat\n")
        for i, ts in enumerate(timestamps):
            cells = ",".join(format(c[i], ".10g") for c in columns)
            fh.write(f"{ts.isoformat()},{cells}\n")


def read_predictions_csv(path) -> dict:
    """Columns of a predictions CSV as arrays keyed by header name."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = ["timestamp", "actual", "trend_hat", "seasonal_hat",
                    "residual_hat", "y_hat"]
        if header != expected:
            raise PipelineError(f"unexpected predictions header {header}")
        stamps = []
        rows = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != 6:
                raise PipelineError(f"row {lineno}: expected 6 fields, got "
                                    f"{len(parts)}")
            try:
                stamps.append(datetime.fromisoformat(parts[0]))
                rows.append([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise PipelineError(f"row {lineno}: {exc}") from exc
    data = np.asarray(rows, dtype=float)
    if data.size == 0:
        raise PipelineError("predictions file has no rows")
    out = {"timestamp": stamps}
    for j, name in enumerate(expected[1:]):
        out[name] = data[:, j]
    return out


def _write_artifacts(config, series, n_fit, decomp, trend_model,
                     seasonal_model, trend_hat, seasonal_hat, residual_hat,
                     y_hat, params, train_report, report) -> dict:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    pred_path = out / "predictions.csv"
    write_predictions_csv(pred_path, series.timestamps()[n_fit:],
                          series.values[n_fit:], trend_hat.values,
                          seasonal_hat.values, residual_hat, y_hat)
    paths["predictions"] = str(pred_path)

    comp_path = out / "decomposition.csv"
    write_components_csv(comp_path, decomp)
    paths["decomposition"] = str(comp_path)

    for label, model in (("trend", trend_model), ("seasonal",
                                                  seasonal_model)):
        p = out / f"arima_{label}.json"
        save_model(p, model)
        paths[f"arima_{label}"] = str(p)

    if params is not None:
        ckpt = out / "residual_net.npz"
        save_params(ckpt, params)
        paths["checkpoint"] = str(ckpt)
    if train_report is not None:
        tr = out / "train_report.csv"
        write_train_report(tr, train_report)
        paths["train_report"] = str(tr)

    report_path = out / "report.json"
    payload = report.to_dict()
    payload["artifacts"] = {**paths, "report": str(report_path)}
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["report"] = str(report_path)
    return paths


def arima_only_forecast(config: PipelineConfig, series: TimeSeries
                        ) -> TimeSeries:
    """Ablation: one ARIMA on the raw series, multi-step over the test split.

    Uses the trend order, the only fitted model in this ablation.
    """
    n_train, n_val, n_test = split_lengths(config, len(series))
    model = arima_fit(series.slice(0, n_train + n_val), config.trend_order)
    return arima_forecast(model, n_test)


def net_only_forecast(config: PipelineConfig, series: TimeSeries
                      ) -> np.ndarray:
    """Ablation: attention net alone on the raw series, one step ahead."""
    n_train, n_val, n_test = split_lengths(config, len(series))
    n_fit = n_train + n_val
    data = make_windows(series.slice(0, n_fit), config.net.window)
    if data.degenerate:
        raise PipelineError("series is degenerate for the net-only ablation")
    params, _ = train(config.net, data)
    wins = _one_step_windows(series.values[:n_fit], series.values[n_fit:],
                             config.net.window)
    return predict_windows(params, wins)


def _apply_assignment(net: NetConfig, assignment: dict) -> NetConfig:
    """A NetConfig with the tuner's choices substituted in."""
    fields = {}
    if "kernel_set" in assignment:
        kernels = KERNEL_SETS[int(assignment["kernel_set"])]
        filters = net.filters_per_branch
        if len(filters) != len(kernels):
            filters = (filters[0],) * len(kernels)
        fields["kernel_sizes"] = kernels
        fields["filters_per_branch"] = filters
    if "filters_scale" in assignment:
        n_branches = len(fields.get("kernel_sizes", net.kernel_sizes))
        fields["filters_per_branch"] = (
            4 * int(assignment["filters_scale"]),) * n_branches
    for name in ("bilstm_units", "batch_size", "window"):
        if name in assignment:
            fields[name] = int(assignment[name])
    if "learning_rate" in assignment:
        fields["learning_rate"] = float(assignment["learning_rate"])
    return replace(net, **fields)


def tune(config: PipelineConfig, series: TimeSeries) -> tuple:
    """Search declared hyperparameters for the lowest validation MSE.

    Returns (best PipelineConfig, iteration history). Each evaluation
    trains the residual net with epochs capped at ``tune_epoch_cap``;
    invalid configurations score infinitely bad rather than aborting.
    """
    if not config.tune_enabled:
        raise PipelineError("tuning is disabled in this configuration")
    if not config.tunable:
        raise PipelineError("no tunable dimensions declared")
    space = SearchSpace(tuple(TUNABLE_DIMS[name] for name in config.tunable))

    n_train, n_val, _ = split_lengths(config, len(series))
    n_fit = n_train + n_val
    with _stage("decomposition"):
        decomp = stl_decompose(series.slice(0, n_fit), config.period,
                               config.trend_loess, config.seasonal_loess)
    base = replace(config.net, max_epochs=min(config.net.max_epochs,
                                              config.tune_epoch_cap))

    def fitness(x):
        try:
            candidate = _apply_assignment(base, space.as_dict(x))
            data = make_windows(decomp.residual, candidate.window)
            if data.degenerate:
                return float("inf")
            _, report = train(candidate, data)
            return report.best_val_mse
        except ValueError:
            return float("inf")

    best_x, best_j, history = optimize(fitness, space, config.optimizer)
    if not np.isfinite(best_j):
        raise PipelineError("tuning found no finite validation loss within "
                            "the evaluation budget")
    best_net = _apply_assignment(config.net, space.as_dict(best_x))
    return replace(config, net=best_net), history


def _parse_order(text: str, label: str) -> ArimaOrder:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise PipelineError(f"{label} must be three comma-separated "
                            f"integers, got {text!r}")
    try:
        p, d, q = (int(v) for v in parts)
    except ValueError as exc:
        raise PipelineError(f"{label}: {exc}") from exc
    return ArimaOrder(p, d, q)


def _parse_int_tuple(text: str, label: str) -> tuple:
    try:
        return tuple(int(v.strip()) for v in text.split(","))
    except ValueError as exc:
        raise PipelineError(f"{label}: {exc}") from exc


def _loess_from_section(section, prefix: str) -> LoessConfig | None:
    keys = [f"{prefix}_span", f"{prefix}_degree", f"{prefix}_robustness"]
    if not any(k in section for k in keys):
        return None
    return LoessConfig(
        span=section.getfloat(keys[0], LoessConfig().span),
        degree=section.getint(keys[1], LoessConfig().degree),
        robustness_iters=section.getint(keys[2],
                                        LoessConfig().robustness_iters))


def read_config(path) -> PipelineConfig:
    """PipelineConfig from a sectioned key = value file.

    Recognized sections: [pipeline], [arima], [decomposition], [net],
    [tuning]. Every key is optional; omitted keys keep their defaults.
    """
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise PipelineError(f"malformed config file: {exc}") from exc

    known = {"pipeline", "arima", "decomposition", "net", "tuning"}
    extra = set(parser.sections()) - known
    if extra:
        raise PipelineError(f"unknown config sections: {sorted(extra)}")

    fields = {}
    try:
        if parser.has_section("pipeline"):
            sec = parser["pipeline"]
            for key in ("pollutant", "out_dir"):
                if key in sec:
                    fields[key] = sec[key]
            if "period" in sec:
                fields["period"] = sec.getint("period")
            for key in ("train_frac", "val_frac", "test_frac"):
                if key in sec:
                    fields[key] = sec.getfloat(key)
        if parser.has_section("arima"):
            sec = parser["arima"]
            if "trend_order" in sec:
                fields["trend_order"] = _parse_order(sec["trend_order"],
                                                     "trend_order")
            if "seasonal_order" in sec:
                fields["seasonal_order"] = _parse_order(
                    sec["seasonal_order"], "seasonal_order")
        if parser.has_section("decomposition"):
            sec = parser["decomposition"]
            fields["trend_loess"] = _loess_from_section(sec, "trend")
            fields["seasonal_loess"] = _loess_from_section(sec, "seasonal")
        if parser.has_section("net"):
            sec = parser["net"]
            net_fields = {}
            if "kernel_sizes" in sec:
                net_fields["kernel_sizes"] = _parse_int_tuple(
                    sec["kernel_sizes"], "kernel_sizes")
            if "filters_per_branch" in sec:
                net_fields["filters_per_branch"] = _parse_int_tuple(
                    sec["filters_per_branch"], "filters_per_branch")
            for key in ("bilstm_units", "bilstm_layers", "window",
                        "attention_dim", "batch_size", "max_epochs",
                        "patience", "seed"):
                if key in sec:
                    net_fields[key] = sec.getint(key)
            if "learning_rate" in sec:
                net_fields["learning_rate"] = sec.getfloat("learning_rate")
            fields["net"] = replace(NetConfig(), **net_fields)
        if parser.has_section("tuning"):
            sec = parser["tuning"]
            if "enabled" in sec:
                fields["tune_enabled"] = sec.getboolean("enabled")
            if "dims" in sec:
                fields["tunable"] = tuple(
                    d.strip() for d in sec["dims"].split(",") if d.strip())
            if "epoch_cap" in sec:
                fields["tune_epoch_cap"] = sec.getint("epoch_cap")
            opt_fields = {}
            for key in ("population", "max_iterations", "seed"):
                if key in sec:
                    opt_fields[key] = sec.getint(key)
            if "epsilon" in sec:
                opt_fields["epsilon"] = sec.getfloat("epsilon")
            if opt_fields:
                fields["optimizer"] = replace(OptimizerConfig(), **opt_fields)
    except ValueError as exc:
        if isinstance(exc, PipelineError):
            raise
        raise PipelineError(f"bad value in config file: {exc}") from exc
    return PipelineConfig(**fields)


def write_config(path, config: PipelineConfig) -> None:
    """The sectioned key = value rendering of a PipelineConfig."""
    parser = configparser.ConfigParser()
    parser["pipeline"] = {
        "pollutant": config.pollutant,
        "period": str(config.period),
        "train_frac": repr(config.train_frac),
        "val_frac": repr(config.val_frac),
        "test_frac": repr(config.test_frac),
    }
    if config.out_dir is not None:
        parser["pipeline"]["out_dir"] = config.out_dir
    o = config.trend_order
    s = config.seasonal_order
    parser["arima"] = {"trend_order": f"{o.p},{o.d},{o.q}",
                       "seasonal_order": f"{s.p},{s.d},{s.q}"}
    dec = {}
    for prefix, cfg in (("trend", config.trend_loess),
                        ("seasonal", config.seasonal_loess)):
        if cfg is not None:
            dec[f"{prefix}_span"] = repr(cfg.span)
            dec[f"{prefix}_degree"] = str(cfg.degree)
            dec[f"{prefix}_robustness"] = str(cfg.robustness_iters)
    if dec:
        parser["decomposition"] = dec
    net = config.net
    parser["net"] = {
        "kernel_sizes": ",".join(str(k) for k in net.kernel_sizes),
        "filters_per_branch": ",".join(str(f)
                                       for f in net.filters_per_branch),
        "bilstm_units": str(net.bilstm_units),
        "bilstm_layers": str(net.bilstm_layers),
        "window": str(net.window),
        "attention_dim": str(net.attention_dim),
        "learning_rate": repr(net.learning_rate),
        "batch_size": str(net.batch_size),
        "max_epochs": str(net.max_epochs),
        "patience": str(net.patience),
        "seed": str(net.seed),
    }
    parser["tuning"] = {
        "enabled": "true" if config.tune_enabled else "false",
        "dims": ",".join(config.tunable),
        "epoch_cap": str(config.tune_epoch_cap),
        "population": str(config.optimizer.population),
        "max_iterations": str(config.optimizer.max_iterations),
        "epsilon": repr(config.optimizer.epsilon),
        "seed": str(config.optimizer.seed),
    }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
