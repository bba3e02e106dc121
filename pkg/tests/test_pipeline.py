"""Tests for the end-to-end pipeline, metrics, tuning and config files."""

import math
import warnings
from dataclasses import replace
from datetime import datetime
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqforecast.arima import ArimaError, ArimaOrder
from aqforecast.pipeline import (
    KERNEL_SETS,
    ForecastReport,
    PipelineConfig,
    PipelineError,
    _apply_assignment,
    arima_only_forecast,
    mae,
    mse,
    net_only_forecast,
    r2,
    read_config,
    read_predictions_csv,
    rmse,
    run_forecast,
    split_lengths,
    synthetic_benchmark,
    tune,
    write_config,
    write_predictions_csv,
)
from aqforecast.decompose import DecomposedSeries
from aqforecast.residualnet import NetConfig, make_windows, train
from aqforecast.series import TimeSeries
from aqforecast.uammo import OptimizerConfig

# Small but competent settings used by every end-to-end test here.
NET = NetConfig(kernel_sizes=(3, 5), filters_per_branch=(4, 4),
                bilstm_units=8, window=24, max_epochs=20, patience=3,
                learning_rate=0.01, seed=0)
TINY_NET = NetConfig(kernel_sizes=(3,), filters_per_branch=(2,),
                     bilstm_units=2, window=12, max_epochs=10, patience=2,
                     learning_rate=0.01, seed=0)


class TestMetrics:
    def test_perfect_prediction(self):
        y = [1.0, 2.0, 3.0]
        assert rmse(y, y) == 0.0
        assert mae(y, y) == 0.0
        assert r2(y, y) == 1.0

    def test_hand_case_symmetric_miss(self):
        y, y_hat = [0.0, 2.0], [1.0, 1.0]
        assert rmse(y, y_hat) == pytest.approx(1.0)
        assert mae(y, y_hat) == pytest.approx(1.0)
        assert r2(y, y_hat) == pytest.approx(0.0)

    def test_mean_prediction_scores_zero_r2(self):
        y = np.array([1.0, 5.0, 3.0, 7.0])
        y_hat = np.full(4, y.mean())
        assert r2(y, y_hat) == pytest.approx(0.0)

    def test_hand_case_single_large_miss(self):
        y, y_hat = [1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 8.0]
        assert mse(y, y_hat) == pytest.approx(4.0)
        assert rmse(y, y_hat) == pytest.approx(2.0)
        assert mae(y, y_hat) == pytest.approx(1.0)
        assert r2(y, y_hat) == pytest.approx(1.0 - 16.0 / 5.0)

    def test_length_mismatch(self):
        with pytest.raises(PipelineError, match="mismatch"):
            rmse([1.0, 2.0], [1.0])

    def test_too_short(self):
        with pytest.raises(PipelineError, match="at least 2"):
            mae([1.0], [1.0])

    def test_r2_constant_actuals(self):
        with pytest.raises(PipelineError, match="constant"):
            r2([3.0, 3.0, 3.0], [1.0, 2.0, 3.0])

    def test_non_finite_rejected(self):
        with pytest.raises(PipelineError, match="finite"):
            mse([1.0, np.nan], [1.0, 2.0])

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_metric_relations_property(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        y = rng.normal(0, 5, n)
        y_hat = rng.normal(0, 5, n)
        assert rmse(y, y_hat) == pytest.approx(math.sqrt(mse(y, y_hat)),
                                               rel=1e-12)
        assert mae(y, y_hat) <= rmse(y, y_hat) + 1e-12
        if np.ptp(y) > 0:
            assert r2(y, y_hat) <= 1.0


class TestBenchmarkGenerator:
    def test_deterministic_and_seed_sensitive(self):
        a = synthetic_benchmark(n=200, seed=3)
        b = synthetic_benchmark(n=200, seed=3)
        c = synthetic_benchmark(n=200, seed=4)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_shape_and_grid(self):
        s = synthetic_benchmark(n=100, seed=0,
                                start=datetime(2022, 5, 1))
        assert len(s) == 100
        assert s.step_hours == 1.0
        assert s.start == datetime(2022, 5, 1)

    def test_generative_structure_recoverable(self):
        # strip the known trend and sine; what is left behaves like AR(1)
        s = synthetic_benchmark(n=4000, seed=0)
        t = np.arange(4000)
        u = s.values - 0.01 * t - 5.0 * np.sin(2 * np.pi * t / 24.0)
        rho = np.corrcoef(u[:-1], u[1:])[0, 1]
        assert rho == pytest.approx(0.7, abs=0.05)
        assert u.std() == pytest.approx(1.0 / math.sqrt(1 - 0.49), rel=0.1)

    def test_noiseless_is_pure_signal(self):
        s = synthetic_benchmark(n=100, seed=0, noise_std=0.0)
        t = np.arange(100)
        expected = 0.01 * t + 5.0 * np.sin(2 * np.pi * t / 24.0)
        assert np.allclose(s.values, expected)

    def test_too_short(self):
        with pytest.raises(PipelineError):
            synthetic_benchmark(n=1)


class TestConfigValidation:
    def test_fractions_must_sum_to_one(self):
        with pytest.raises(PipelineError, match="sum to 1"):
            PipelineConfig(train_frac=0.7, val_frac=0.2, test_frac=0.2)

    def test_fractions_must_be_positive(self):
        with pytest.raises(PipelineError, match="positive"):
            PipelineConfig(train_frac=1.0, val_frac=+0.15, test_frac=-0.15)

    def test_unknown_tunable(self):
        with pytest.raises(PipelineError, match="unknown tunable"):
            PipelineConfig(tunable=("dropout",))

    def test_period_floor(self):
        with pytest.raises(PipelineError, match="period"):
            PipelineConfig(period=1)

    def test_split_lengths_standard(self):
        assert split_lengths(PipelineConfig(), 1000) == (700, 150, 150)
        assert split_lengths(PipelineConfig(), 13) == (9, 1, 3)

    def test_split_lengths_test_too_short(self):
        cfg = PipelineConfig(train_frac=0.5, val_frac=0.4, test_frac=0.1)
        with pytest.raises(PipelineError, match="at least 2"):
            split_lengths(cfg, 10)


class TestForecastReport:
    def test_rejects_inconsistent_rmse(self):
        with pytest.raises(PipelineError, match="rmse"):
            ForecastReport("x", 10, rmse=2.0, mae=1.0, r2=0.5, mse=3.0,
                           breakdown={})

    def test_rejects_r2_above_one(self):
        with pytest.raises(PipelineError, match="r2"):
            ForecastReport("x", 10, rmse=2.0, mae=1.0, r2=1.5, mse=4.0,
                           breakdown={})

    def test_to_dict_layout(self):
        rep = ForecastReport("O3", 5, rmse=2.0, mae=1.0, r2=0.5, mse=4.0,
                             breakdown={"trend_rmse": 0.1},
                             paths={"report": "r.json"})
        d = rep.to_dict()
        assert d["metrics"] == {"RMSE": 2.0, "MAE": 1.0, "R2": 0.5,
                                "MSE": 4.0}
        assert d["pollutant"] == "O3"
        assert d["artifacts"] == {"report": "r.json"}


class TestRunForecast:
    def test_benchmark_high_r2(self):
        series = synthetic_benchmark(n=2000, seed=0)
        report = run_forecast(PipelineConfig(net=NET), series)
        assert report.r2 > 0.9
        assert report.horizon == 300

    def test_zero_residual_synthetic(self, tmp_path):
        series = synthetic_benchmark(n=1200, seed=0, noise_std=0.0)
        cfg = PipelineConfig(net=NET, out_dir=str(tmp_path))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = run_forecast(cfg, series)
        data = read_predictions_csv(tmp_path / "predictions.csv")
        # the net has nothing to add: its forecasts vanish and the hybrid
        # matches the trend+seasonal-only error
        assert np.max(np.abs(data["residual_hat"])) < 1e-6
        ts_only = rmse(data["actual"],
                       data["trend_hat"] + data["seasonal_hat"])
        assert abs(report.rmse - ts_only) <= 0.05 * max(ts_only, 1e-6)

    def test_emitted_sum_reconstructs_prediction(self, tmp_path):
        series = synthetic_benchmark(n=600, seed=1)
        cfg = PipelineConfig(net=TINY_NET, out_dir=str(tmp_path))
        run_forecast(cfg, series)
        data = read_predictions_csv(tmp_path / "predictions.csv")
        total = (data["trend_hat"] + data["seasonal_hat"]
                 + data["residual_hat"])
        scale = max(1.0, float(np.max(np.abs(data["y_hat"]))))
        assert np.max(np.abs(data["y_hat"] - total)) <= 1e-9 * scale

    def test_metrics_match_emitted_files(self, tmp_path):
        # brute-force recomputation from the CSV agrees with the report
        series = synthetic_benchmark(n=600, seed=2)
        cfg = PipelineConfig(net=TINY_NET, out_dir=str(tmp_path))
        report = run_forecast(cfg, series)
        data = read_predictions_csv(tmp_path / "predictions.csv")
        y, y_hat = data["actual"], data["y_hat"]
        assert report.rmse == pytest.approx(
            math.sqrt(np.mean((y - y_hat) ** 2)), rel=1e-6)
        assert report.mae == pytest.approx(np.mean(np.abs(y - y_hat)),
                                           rel=1e-6)
        sst = np.sum((y - y.mean()) ** 2)
        assert report.r2 == pytest.approx(
            1.0 - np.sum((y - y_hat) ** 2) / sst, rel=1e-6)

    def test_deterministic_artifacts(self, tmp_path):
        series = synthetic_benchmark(n=600, seed=0)
        blobs = []
        for run in range(2):
            out = tmp_path / f"run{run}"
            cfg = PipelineConfig(net=TINY_NET, out_dir=str(out))
            run_forecast(cfg, series)
            blobs.append((out / "predictions.csv").read_bytes())
        assert blobs[0] == blobs[1]

    def test_artifact_set(self, tmp_path):
        series = synthetic_benchmark(n=600, seed=0)
        cfg = PipelineConfig(net=TINY_NET, out_dir=str(tmp_path))
        report = run_forecast(cfg, series)
        for key in ("predictions", "decomposition", "arima_trend",
                    "arima_seasonal", "checkpoint", "train_report",
                    "report"):
            assert key in report.paths
            assert Path(report.paths[key]).exists()

    def test_test_split_too_short(self):
        series = synthetic_benchmark(n=200, seed=0)
        cfg = PipelineConfig(train_frac=0.8, val_frac=0.195,
                             test_frac=0.005, net=TINY_NET)
        with pytest.raises(PipelineError, match="test split"):
            run_forecast(cfg, series)

    def test_training_portion_too_short(self):
        series = synthetic_benchmark(n=60, seed=0)
        with pytest.raises(PipelineError, match="two\nperiods|two periods"):
            run_forecast(PipelineConfig(net=TINY_NET), series)

    def test_stage_error_carries_stage_name(self):
        series = synthetic_benchmark(n=120, seed=0)
        cfg = PipelineConfig(net=TINY_NET,
                             trend_order=ArimaOrder(150, 0, 0))
        with pytest.raises(PipelineError, match="trend ARIMA stage") as exc:
            run_forecast(cfg, series)
        assert isinstance(exc.value.__cause__, ArimaError)

    def test_degenerate_residual_falls_back_to_zero(self, monkeypatch,
                                                    tmp_path):
        series = synthetic_benchmark(n=600, seed=0)
        cfg = PipelineConfig(net=TINY_NET, out_dir=str(tmp_path))
        n_fit = 420 + 90

        def flat_stl(sub, period, trend_cfg=None, seasonal_cfg=None,
                     **kwargs):
            t = np.arange(len(sub), dtype=float)
            trend = sub.with_values(series.values[:len(sub)]
                                    - 5 * np.sin(2 * np.pi * t / 24))
            seasonal = sub.with_values(5 * np.sin(2 * np.pi * t / 24))
            residual = sub.with_values(np.zeros(len(sub)))
            return DecomposedSeries(trend, seasonal, residual, period)

        monkeypatch.setattr("aqforecast.pipeline.stl_decompose", flat_stl)
        with pytest.warns(UserWarning, match="degenerate"):
            report = run_forecast(cfg, series)
        data = read_predictions_csv(tmp_path / "predictions.csv")
        assert np.all(data["residual_hat"] == 0.0)
        assert "checkpoint" not in report.paths


class TestAblations:
    def test_hybrid_beats_both_ablations(self):
        series = synthetic_benchmark(n=1200, seed=0)
        cfg = PipelineConfig(net=NET)
        report = run_forecast(cfg, series)
        n_tr, n_v, _ = split_lengths(cfg, len(series))
        y_test = series.values[n_tr + n_v:]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            arima_rmse = rmse(y_test, arima_only_forecast(cfg, series).values)
        net_rmse = rmse(y_test, net_only_forecast(cfg, series))
        assert report.rmse < arima_rmse
        assert report.rmse < net_rmse

    def test_ablation_shapes(self):
        series = synthetic_benchmark(n=600, seed=0)
        cfg = PipelineConfig(net=TINY_NET)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = arima_only_forecast(cfg, series)
        n = net_only_forecast(cfg, series)
        assert len(a) == 90 and n.shape == (90,)
        assert a.start == series.timestamps()[510]


class TestApplyAssignment:
    def test_kernel_set_resizes_filters(self):
        net = NetConfig(kernel_sizes=(3,), filters_per_branch=(6,),
                        window=24)
        out = _apply_assignment(net, {"kernel_set": 2})
        assert out.kernel_sizes == KERNEL_SETS[2]
        assert out.filters_per_branch == (6, 6, 6)

    def test_filters_scale(self):
        out = _apply_assignment(NetConfig(), {"filters_scale": 3})
        assert out.filters_per_branch == (12, 12, 12)

    def test_scalar_fields(self):
        out = _apply_assignment(NetConfig(), {"learning_rate": 0.02,
                                              "bilstm_units": 7,
                                              "batch_size": 16,
                                              "window": 30})
        assert out.learning_rate == 0.02
        assert out.bilstm_units == 7
        assert out.batch_size == 16
        assert out.window == 30


class TestTune:
    def base(self, **kw):
        defaults = dict(net=TINY_NET, tune_enabled=True,
                        tunable=("learning_rate",), tune_epoch_cap=5)
        defaults.update(kw)
        return PipelineConfig(**defaults)

    def test_requires_enabled(self):
        cfg = PipelineConfig(net=TINY_NET, tunable=("learning_rate",))
        with pytest.raises(PipelineError, match="disabled"):
            tune(cfg, synthetic_benchmark(n=300, seed=0))

    def test_requires_dims(self):
        cfg = PipelineConfig(net=TINY_NET, tune_enabled=True)
        with pytest.raises(PipelineError, match="tunable"):
            tune(cfg, synthetic_benchmark(n=300, seed=0))

    def test_best_dim_within_bounds(self):
        cfg = self.base(optimizer=OptimizerConfig(population=3,
                                                  max_iterations=1, seed=0))
        best, history = tune(cfg, synthetic_benchmark(n=400, seed=0))
        assert 1e-4 <= best.net.learning_rate <= 0.1
        assert best.net.max_epochs == TINY_NET.max_epochs
        assert history[0].iteration == 0

    def test_large_epsilon_stops_after_one_wave(self):
        cfg = self.base(optimizer=OptimizerConfig(population=3,
                                                  max_iterations=5,
                                                  epsilon=1.0, seed=0))
        _, history = tune(cfg, synthetic_benchmark(n=400, seed=0))
        assert len(history) == 2

    def test_tuned_no_worse_than_default(self):
        # the default net under the same epoch cap is the yardstick
        series = synthetic_benchmark(n=600, seed=0)
        base = self.base()
        from aqforecast.decompose import stl_decompose
        n_tr, n_v, _ = split_lengths(base, len(series))
        decomp = stl_decompose(series.slice(0, n_tr + n_v), base.period)
        capped = replace(TINY_NET, max_epochs=5)
        _, rep = train(capped, make_windows(decomp.residual, capped.window))
        untuned = rep.best_val_mse
        wins = 0
        for s in range(10):
            cfg = self.base(optimizer=OptimizerConfig(population=3,
                                                      max_iterations=1,
                                                      seed=s))
            _, history = tune(cfg, series)
            wins += min(r.best_j for r in history) <= untuned + 1e-12
        assert wins >= 9

    def test_no_finite_fitness_raises(self):
        # series so short every candidate window is untrainable
        values = np.sin(np.arange(11.0))
        series = TimeSeries(datetime(2021, 1, 1), 1.0, values)
        cfg = PipelineConfig(net=TINY_NET, period=2, tune_enabled=True,
                             tunable=("window",), tune_epoch_cap=2,
                             optimizer=OptimizerConfig(population=2,
                                                       max_iterations=1,
                                                       seed=0))
        with pytest.raises(PipelineError, match="finite"):
            tune(cfg, series)


class TestConfigFile:
    def full_config(self):
        return PipelineConfig(
            pollutant="NOx", trend_order=ArimaOrder(2, 1, 1),
            seasonal_order=ArimaOrder(3, 0, 2), period=12,
            net=TINY_NET, train_frac=0.6, val_frac=0.2, test_frac=0.2,
            tune_enabled=True, tunable=("learning_rate", "window"),
            tune_epoch_cap=7,
            optimizer=OptimizerConfig(population=5, max_iterations=3,
                                      epsilon=0.01, seed=9),
            out_dir="artifacts")

    def test_round_trip(self, tmp_path):
        cfg = self.full_config()
        path = tmp_path / "run.ini"
        write_config(path, cfg)
        assert read_config(path) == cfg

    def test_missing_file(self, tmp_path):
        with pytest.raises(PipelineError, match="not found"):
            read_config(tmp_path / "absent.ini")

    def test_partial_file_keeps_defaults(self, tmp_path):
        path = tmp_path / "partial.ini"
        path.write_text("[pipeline]\npollutant = CO\n")
        cfg = read_config(path)
        assert cfg.pollutant == "CO"
        assert cfg.trend_order == ArimaOrder(1, 1, 1)
        assert cfg.net == NetConfig()

    def test_bad_order_string(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[arima]\ntrend_order = 1,2\n")
        with pytest.raises(PipelineError, match="three comma-separated"):
            read_config(path)

    def test_bad_int(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[net]\nbilstm_units = many\n")
        with pytest.raises(PipelineError, match="bad value"):
            read_config(path)

    def test_unknown_section(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[surprise]\nx = 1\n")
        with pytest.raises(PipelineError, match="unknown config section"):
            read_config(path)


class TestPredictionsCsv:
    def test_round_trip(self, tmp_path):
        stamps = [datetime(2021, 1, 1, h) for h in range(3)]
        cols = [np.array([1.0, 2.0, 3.0]), np.array([0.5, 1.0, 1.5]),
                np.array([0.25, 0.5, 0.75]), np.array([0.1, 0.2, 0.3]),
                np.array([0.85, 1.7, 2.55])]
        path = tmp_path / "p.csv"
        write_predictions_csv(path, stamps, *cols)
        data = read_predictions_csv(path)
        assert data["timestamp"] == stamps
        names = ("actual", "trend_hat", "seasonal_hat", "residual_hat",
                 "y_hat")
        for name, col in zip(names, cols):
            assert np.allclose(data[name], col)

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("time,value\n2021-01-01T00:00:00,1\n")
        with pytest.raises(PipelineError, match="header"):
            read_predictions_csv(path)

    def test_bad_row_is_numbered(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("timestamp,actual,trend_hat,seasonal_hat,"
                        "residual_hat,y_hat\n"
                        "2021-01-01T00:00:00,1,2,3,4,5\n"
                        "2021-01-01T01:00:00,1,2,3\n")
        with pytest.raises(PipelineError, match="row 3"):
            read_predictions_csv(path)
