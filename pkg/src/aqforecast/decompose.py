"""LOESS smoothing and seasonal-trend decomposition of a series.

The decomposition splits a series into trend + seasonal + residual where the
residual is defined by subtraction, so the additive identity holds exactly.
The seasonal part comes from LOESS-smoothing each cycle-subseries and
removing a moving-average low-pass of the result; the trend from
LOESS-smoothing the deseasonalized series; robustness from bisquare
reweighting in an outer loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .series import TimeSeries

__all__ = [
    "DecompositionError",
    "LoessConfig",
    "DecomposedSeries",
    "loess_smooth",
    "stl_decompose",
    "write_components_csv",
    "read_components_csv",
]


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class LoessConfig:
    """Local regression settings.

    ``span`` is the fraction of points in each local window (0 < span <= 1),
    ``degree`` the local polynomial degree (0, 1 or 2), and
    ``robustness_iters`` the number of bisquare reweighting passes.
    """

    span: float = 0.25
    degree: int = 1
    robustness_iters: int = 1

    def __post_init__(self):
        if not 0.0 < self.span <= 1.0:
            raise DecompositionError(f"span must be in (0, 1], got {self.span}")
        if self.degree not in (0, 1, 2):
            raise DecompositionError(f"degree must be 0, 1 or 2, got {self.degree}")
        if self.robustness_iters < 0:
            raise DecompositionError("robustness_iters must be >= 0")

    def window_size(self, n: int) -> int:
        q = int(np.ceil(self.span * n))
        if q < self.degree + 1:
            raise DecompositionError(
                f"window of {q} points too small for degree {self.degree} "
                f"(span {self.span} on {n} points)")
        return min(q, n)


@dataclass
class DecomposedSeries:
    """Trend / seasonal / residual triple; components sum to the input."""

    trend: TimeSeries
    seasonal: TimeSeries
    residual: TimeSeries
    period: int

    def __post_init__(self):
        if self.period < 2:
            raise DecompositionError("period must be >= 2")
        if not (self.trend.same_grid(self.seasonal)
                and self.trend.same_grid(self.residual)):
            raise DecompositionError("components must share one sampling grid")

    def reconstruct(self) -> TimeSeries:
        return self.trend.with_values(
            self.trend.values + self.seasonal.values + self.residual.values,
            name="reconstructed")


def _tricube(u: np.ndarray) -> np.ndarray:
    w = np.clip(1.0 - np.abs(u) ** 3, 0.0, None)
    return w ** 3


def _bisquare(u: np.ndarray) -> np.ndarray:
    w = np.clip(1.0 - u ** 2, 0.0, None)
    return w ** 2


def _solve_beta0(moments: np.ndarray, rhs: np.ndarray, degree: int) -> np.ndarray:
    """Constant term of the weighted LS polynomial, batched over rows.

    ``moments[k]`` holds sum(w * dx**k) and ``rhs[k]`` holds sum(w * dx**k * y)
    for every fit location. Windows are centered on the evaluation point, so
    the constant term is the fitted value. Returns NaN where the normal
    equations are singular; callers retry those locations unweighted.
    """
    if degree == 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(moments[0] > 0, rhs[0] / moments[0], np.nan)
    if degree == 1:
        s0, s1, s2 = moments[:3]
        det = s0 * s2 - s1 * s1
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = (rhs[0] * s2 - rhs[1] * s1) / det
        scale = s0 * s2 + s1 * s1 + 1e-300
        return np.where(np.abs(det) > 1e-12 * scale, beta, np.nan)
    s0, s1, s2, s3, s4 = moments[:5]
    t0, t1, t2 = rhs[:3]
    det = (s0 * (s2 * s4 - s3 * s3)
           - s1 * (s1 * s4 - s3 * s2)
           + s2 * (s1 * s3 - s2 * s2))
    num = (t0 * (s2 * s4 - s3 * s3)
           - s1 * (t1 * s4 - s3 * t2)
           + s2 * (t1 * s3 - s2 * t2))
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = num / det
    scale = np.abs(s0 * s2 * s4) + np.abs(s1 * s2 * s3) + 1e-300
    return np.where(np.abs(det) > 1e-10 * scale, beta, np.nan)


def _window_starts(n: int, q: int, centers: np.ndarray) -> np.ndarray:
    """Start index of the q-point window nearest each (possibly fractional)
    center position, truncated at the series boundaries."""
    lo = np.rint(centers - (q - 1) / 2.0).astype(int)
    return np.clip(lo, 0, n - q)


def _loess_values(y: np.ndarray, cfg: LoessConfig,
                  prior: np.ndarray | None = None) -> np.ndarray:
    """Smooth y (sampled on 0..n-1) at every sample position."""
    n = y.size
    q = cfg.window_size(n)
    centers = np.arange(n, dtype=float)
    rho = np.ones(n) if prior is None else np.asarray(prior, dtype=float)

    y_win = np.lib.stride_tricks.sliding_window_view(y, q)
    rho_win = np.lib.stride_tricks.sliding_window_view(rho, q)
    lo = _window_starts(n, q, centers)
    offsets = np.arange(q)

    robust = np.ones(n)
    smooth = y.astype(float).copy()
    for it in range(cfg.robustness_iters + 1):
        dx = lo[:, None] + offsets[None, :] - centers[:, None]
        w = np.ones((n, q)) if cfg.span >= 1.0 else _fit_weights(dx, q)
        w = w * rho_win[lo] * np.lib.stride_tricks.sliding_window_view(robust, q)[lo]
        smooth = _fit_rows(dx, y_win[lo], w, cfg.degree)

        bad = ~np.isfinite(smooth)
        if bad.any():
            # singular windows (too few positive weights): refit unweighted
            uniform = np.ones((int(bad.sum()), q))
            smooth[bad] = _fit_rows(dx[bad], y_win[lo[bad]], uniform, cfg.degree)

        if it == cfg.robustness_iters:
            break
        resid = y - smooth
        s = np.median(np.abs(resid))
        if s <= 0:
            break
        robust = _bisquare(resid / (6.0 * s))
    return smooth


def _fit_weights(dx: np.ndarray, q: int) -> np.ndarray:
    dmax = np.abs(dx).max(axis=1, keepdims=True)
    dmax = np.where(dmax > 0, dmax, 1.0)
    return _tricube(dx / dmax)


def _fit_rows(dx: np.ndarray, y: np.ndarray, w: np.ndarray,
              degree: int) -> np.ndarray:
    n_moments = 2 * degree + 1
    moments = np.stack([(w * dx ** k).sum(axis=1) for k in range(n_moments)])
    rhs = np.stack([(w * dx ** k * y).sum(axis=1) for k in range(degree + 1)])
    return _solve_beta0(moments, rhs, degree)


def _loess_at(x0: float, y: np.ndarray, cfg: LoessConfig,
              prior: np.ndarray | None = None) -> float:
    """Local fit evaluated at one (possibly out-of-range) position x0.

    Used to extend cycle-subseries one step past each end: the boundary
    window's own polynomial supplies the value.
    """
    n = y.size
    q = cfg.window_size(n)
    lo = int(_window_starts(n, q, np.array([x0]))[0])
    dx = (lo + np.arange(q) - x0)[None, :]
    if cfg.span >= 1.0:
        w = np.ones((1, q))
    else:
        w = _fit_weights(dx, q)
    if prior is not None:
        w = w * prior[lo:lo + q][None, :]
    val = _fit_rows(dx, y[lo:lo + q][None, :], w, cfg.degree)[0]
    if not np.isfinite(val):
        val = _fit_rows(dx, y[lo:lo + q][None, :], np.ones((1, q)), cfg.degree)[0]
    return float(val)


def loess_smooth(series: TimeSeries, cfg: LoessConfig | None = None) -> TimeSeries:
    """Locally weighted polynomial smoothing with tricube weights.

    Each point is fitted from its ``ceil(span * n)`` nearest neighbours
    (windows truncate at the boundaries, so end windows are one-sided).
    With ``span=1`` the window is the whole series and the weights are
    uniform, so the smoother degenerates to a single global polynomial
    least-squares fit. Robustness passes downweight points with large
    residuals via the bisquare function.
    """
    cfg = cfg or LoessConfig()
    if len(series) < 3:
        raise DecompositionError(f"need at least 3 points, got {len(series)}")
    return series.with_values(_loess_values(series.values, cfg))


def stl_decompose(series: TimeSeries, period: int,
                  trend_cfg: LoessConfig | None = None,
                  seasonal_cfg: LoessConfig | None = None,
                  inner_iters: int = 2,
                  outer_iters: int = 1) -> DecomposedSeries:
    """Split a series into trend, seasonal and residual components.

    Iterates: detrend, LOESS-smooth each cycle-subseries (extended one
    position past each end via the boundary local fits), subtract a
    triple-moving-average low-pass from the smoothed subseries to get the
    seasonal, deseasonalize, LOESS-smooth to get the trend. Outer passes
    recompute bisquare robustness weights from the residual. Finally each
    full cycle of the seasonal is centered (its mean moved into the trend)
    and the residual is defined as input - trend - seasonal, which makes
    the additive reconstruction exact by construction.
    """
    if period < 2:
        raise DecompositionError(f"period must be >= 2, got {period}")
    n = len(series)
    if n < 2 * period:
        raise DecompositionError(
            f"series of {n} points too short for period {period} "
            f"(need at least {2 * period})")
    trend_cfg = trend_cfg or LoessConfig(span=0.25, degree=1, robustness_iters=0)
    seasonal_cfg = seasonal_cfg or LoessConfig(span=0.75, degree=1,
                                               robustness_iters=0)
    y = series.values
    trend = np.zeros(n)
    seasonal = np.zeros(n)
    rho = np.ones(n)

    for outer in range(outer_iters + 1):
        for _ in range(inner_iters):
            detrended = y - trend
            padded = np.empty(n + 2 * period)
            for k in range(period):
                idx = np.arange(k, n, period)
                sub = detrended[idx]
                sub_rho = rho[idx]
                padded[period + idx] = _loess_values(sub, seasonal_cfg, sub_rho)
                padded[k] = _loess_at(-1.0, sub, seasonal_cfg, sub_rho)
                padded[period + k + period * sub.size] = _loess_at(
                    float(sub.size), sub, seasonal_cfg, sub_rho)
            lowpass = _lowpass(padded, period)
            seasonal = padded[period:period + n] - lowpass
            trend = _loess_values(y - seasonal, trend_cfg, rho)
        if outer == outer_iters:
            break
        resid = y - trend - seasonal
        s = np.median(np.abs(resid))
        if s <= 0:
            break
        rho = _bisquare(resid / (6.0 * s))

    # move per-cycle means into the trend so every full cycle sums to zero;
    # the tail partial cycle reuses the last full cycle's shift to avoid a step
    n_full = n // period
    m = 0.0
    for c in range(n_full):
        sl = slice(c * period, (c + 1) * period)
        m = seasonal[sl].mean()
        seasonal[sl] -= m
        trend[sl] += m
    if n_full and n % period:
        sl = slice(n_full * period, n)
        seasonal[sl] -= m
        trend[sl] += m

    residual = y - trend - seasonal
    return DecomposedSeries(
        trend=series.with_values(trend, "trend"),
        seasonal=series.with_values(seasonal, "seasonal"),
        residual=series.with_values(residual, "residual"),
        period=period)


def _lowpass(x: np.ndarray, period: int) -> np.ndarray:
    """Triple moving average (period, period, 3): passes lines exactly,
    annihilates any period-periodic component, trims period points per end."""
    kern_p = np.full(period, 1.0 / period)
    out = np.convolve(x, kern_p, mode="valid")
    out = np.convolve(out, kern_p, mode="valid")
    return np.convolve(out, np.full(3, 1.0 / 3.0), mode="valid")


def write_components_csv(path, decomp: DecomposedSeries) -> None:
    """Dump a decomposition as (timestamp, trend, seasonal, residual) CSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,trend,seasonal,residual\n")
        stamps = decomp.trend.timestamps()
        for i, ts in enumerate(stamps):
            fh.write(f"{ts.isoformat()},{decomp.trend.values[i]:.10g},"
                     f"{decomp.seasonal.values[i]:.10g},"
                     f"{decomp.residual.values[i]:.10g}\n")


def read_components_csv(path, period: int) -> DecomposedSeries:
    """Read a decomposition dump written by :func:`write_components_csv`."""
    from datetime import datetime

    stamps, cols = [], ([], [], [])
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != ["timestamp", "trend", "seasonal", "residual"]:
            raise DecompositionError(f"{path}: unexpected header {header}")
        for line in fh:
            if not line.strip():
                continue
            parts = line.strip().split(",")
            stamps.append(datetime.fromisoformat(parts[0]))
            for c, text in zip(cols, parts[1:4]):
                c.append(float(text))
    if len(stamps) < 2:
        raise DecompositionError(f"{path}: need at least 2 rows")
    step_hours = (stamps[1] - stamps[0]).total_seconds() / 3600.0
    mk = lambda vals, name: TimeSeries(stamps[0], step_hours,
                                       np.array(vals), name)
    return DecomposedSeries(mk(cols[0], "trend"), mk(cols[1], "seasonal"),
                            mk(cols[2], "residual"), period)
