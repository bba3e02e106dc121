"""Hybrid air-quality forecasting: decomposition, ARIMA, a recurrent
residual corrector and a multi-strategy hyperparameter optimizer."""

__version__ = "0.1.0"

from .arima import (
    ArimaError,
    ArimaModel,
    ArimaOrder,
    POLLUTANT_ORDERS,
    StationarityWarning,
    default_order,
)
from .decompose import (
    DecomposedSeries,
    DecompositionError,
    LoessConfig,
    loess_smooth,
    stl_decompose,
)
from .ingest import FeatureFrame, IngestError, RawTable, clean_pipeline
from .pipeline import (
    ForecastReport,
    PipelineConfig,
    PipelineError,
    mae,
    mse,
    r2,
    read_config,
    rmse,
    run_forecast,
    synthetic_benchmark,
    tune,
    write_config,
)
from .residualnet import NetConfig, NetError, NetParams, TrainReport
from .series import TimeSeries, read_series_csv, write_series_csv
from .uammo import (
    Dim,
    OptimizerConfig,
    SearchSpace,
    UammoError,
    optimize,
)

__all__ = [
    "__version__",
    "ArimaError",
    "ArimaModel",
    "ArimaOrder",
    "POLLUTANT_ORDERS",
    "StationarityWarning",
    "default_order",
    "DecomposedSeries",
    "DecompositionError",
    "LoessConfig",
    "loess_smooth",
    "stl_decompose",
    "FeatureFrame",
    "IngestError",
    "RawTable",
    "clean_pipeline",
    "ForecastReport",
    "PipelineConfig",
    "PipelineError",
    "mae",
    "mse",
    "r2",
    "read_config",
    "rmse",
    "run_forecast",
    "synthetic_benchmark",
    "tune",
    "write_config",
    "NetConfig",
    "NetError",
    "NetParams",
    "TrainReport",
    "TimeSeries",
    "read_series_csv",
    "write_series_csv",
    "Dim",
    "OptimizerConfig",
    "SearchSpace",
    "UammoError",
    "optimize",
]
