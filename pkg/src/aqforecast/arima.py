"""ARIMA(p,d,q) estimation and forecasting for the smooth components.

Estimation minimizes the conditional sum of squares (CSS): innovations are
computed recursively with pre-sample residuals fixed at zero, conditioning
on the first p observations, and the objective is minimized by Nelder-Mead
from a least-squares AR warm start. This avoids a Kalman filter at a small,
documented accuracy cost — adequate at the low orders used here (p + q <= 5).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .series import TimeSeries

__all__ = [
    "ArimaError",
    "StationarityWarning",
    "ArimaOrder",
    "ArimaModel",
    "POLLUTANT_ORDERS",
    "default_order",
    "difference",
    "undifference",
    "fit",
    "forecast",
    "simulate",
    "save_model",
    "load_model",
]


class ArimaError(ValueError):
    pass


class StationarityWarning(UserWarning):
    """The fitted AR polynomial has a root on or inside the unit circle."""


@dataclass(frozen=True)
class ArimaOrder:
    """(p, d, q): AR order, differencing order, MA order."""

    p: int
    d: int
    q: int

    def __post_init__(self):
        for label, v in (("p", self.p), ("d", self.d), ("q", self.q)):
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ArimaError(f"{label} must be a non-negative integer, "
                                 f"got {v!r}")
        if self.p + self.q < 1 and self.d < 1:
            raise ArimaError("order must have p + q >= 1 or d >= 1")


#: Per-pollutant default orders (applied to the trend model).
POLLUTANT_ORDERS: dict[str, ArimaOrder] = {
    "NOx": ArimaOrder(2, 0, 3),
    "CO": ArimaOrder(5, 0, 0),
    "O3": ArimaOrder(2, 0, 1),
    "PM2.5": ArimaOrder(1, 0, 4),
}


def default_order(pollutant: str) -> ArimaOrder | None:
    """Default order for a pollutant name (case-insensitive); None if unknown."""
    wanted = pollutant.strip().casefold()
    for name, order in POLLUTANT_ORDERS.items():
        if name.casefold() == wanted:
            return order
    return None


@dataclass
class ArimaModel:
    """A fitted (or hand-built) ARIMA model plus the state needed to forecast.

    ``tail_w`` holds the last p differenced observations, ``tail_e`` the last
    q residuals, and ``tail_levels`` the last value of the i-times differenced
    series for i = 0..d-1, used to invert the differencing by cumulative
    summation. ``origin``/``step_hours`` place forecasts on the time axis.
    """

    order: ArimaOrder
    phi: np.ndarray
    theta: np.ndarray
    intercept: float
    sigma2: float
    tail_w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_e: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_levels: np.ndarray = field(default_factory=lambda: np.zeros(0))
    origin: datetime = datetime(2000, 1, 1)
    step_hours: float = 1.0
    name: str = ""

    def __post_init__(self):
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if self.phi.size == 0:
            self.phi = np.zeros(0)
        if self.theta.size == 0:
            self.theta = np.zeros(0)
        self.tail_w = np.asarray(self.tail_w, dtype=float)
        self.tail_e = np.asarray(self.tail_e, dtype=float)
        self.tail_levels = np.asarray(self.tail_levels, dtype=float)
        if self.phi.size != self.order.p or self.theta.size != self.order.q:
            raise ArimaError("coefficient lengths do not match the order")
        if self.sigma2 < 0:
            raise ArimaError(f"sigma2 must be >= 0, got {self.sigma2}")
        if not self.is_stationary():
            warnings.warn(
                f"AR polynomial of {self.name or 'model'} has a root inside "
                "or on the unit circle; forecasts may diverge",
                StationarityWarning, stacklevel=2)

    def ar_root_moduli(self) -> np.ndarray:
        """Moduli of the roots of 1 - phi_1 z - ... - phi_p z^p."""
        if self.order.p == 0 or not np.any(self.phi):
            return np.zeros(0)
        coeffs = np.concatenate([-self.phi[::-1], [1.0]])
        return np.abs(np.roots(coeffs))

    def is_stationary(self, tol: float = 1e-8) -> bool:
        moduli = self.ar_root_moduli()
        return bool(moduli.size == 0 or moduli.min() > 1.0 + tol)


def difference(series: TimeSeries, d: int) -> TimeSeries:
    """d-fold first difference; the series shrinks by d and starts d steps in."""
    if d < 0:
        raise ArimaError("d must be >= 0")
    if len(series) <= d:
        raise ArimaError(f"cannot difference {len(series)} points {d} times")
    values = np.diff(series.values, n=d)
    return TimeSeries(series.start + d * series.step, series.step_hours,
                      values, series.name)


def undifference(series: TimeSeries, heads) -> TimeSeries:
    """Invert :func:`difference` given the d retained leading values.

    ``heads[i]`` must be the first value of the i-times differenced series,
    for i = 0..d-1. Exact inverse of ``difference(x, d)`` with
    ``heads = [x[0], diff(x)[0], ..., diff^{d-1}(x)[0]]``.
    """
    heads = list(heads)
    values = series.values
    for h in reversed(heads):
        values = np.concatenate([[h], h + np.cumsum(values)])
    return TimeSeries(series.start - len(heads) * series.step,
                      series.step_hours, values, series.name)


def _css_residuals(w: np.ndarray, p: int, q: int, params: np.ndarray
                   ) -> np.ndarray:
    """Innovations conditional on the first p observations, pre-sample e = 0."""
    c = params[0]
    phi = params[1:1 + p]
    theta = params[1 + p:]
    a = w[p:] - c
    for i in range(p):
        a = a - phi[i] * w[p - 1 - i:w.size - 1 - i]
    if q == 0:
        return a
    return lfilter([1.0], np.concatenate([[1.0], theta]), a)


def fit(series: TimeSeries, order: ArimaOrder) -> ArimaModel:
    """Estimate an ARIMA model by CSS.

    Recommended length is at least 10 * (p + q + 1); the hard minimum is
    p + q + d + 1 points. A constant (zero-variance) input short-circuits to
    the exact degenerate model. Raises if the final objective is non-finite.
    """
    p, d, q = order.p, order.d, order.q
    n_min = p + q + d + 1
    if len(series) < n_min:
        raise ArimaError(f"series of {len(series)} points too short for "
                         f"order ({p},{d},{q}); need at least {n_min}")
    diffed = difference(series, d) if d else series
    w = diffed.values
    n = w.size

    tail_levels = np.array([np.diff(series.values, n=i)[-1] for i in range(d)])
    common = dict(origin=series.timestamps()[-1], step_hours=series.step_hours,
                  name=series.name)

    if np.ptp(w) == 0.0:
        # constant input: intercept carries the level, all dynamics vanish
        params = np.concatenate([[w[0]], np.zeros(p + q)])
        e = _css_residuals(w, p, q, params)
        return ArimaModel(order, np.zeros(p), np.zeros(q), float(w[0]), 0.0,
                          tail_w=w[n - p:], tail_e=e[e.size - q:] if q else
                          np.zeros(0), tail_levels=tail_levels, **common)

    x0 = np.zeros(1 + p + q)
    if p:
        # least-squares AR warm start
        X = np.column_stack([np.ones(n - p)]
                            + [w[p - 1 - i:n - 1 - i] for i in range(p)])
        coef, *_ = np.linalg.lstsq(X, w[p:], rcond=None)
        x0[:1 + p] = coef
    else:
        x0[0] = w.mean()

    def objective(params):
        e = _css_residuals(w, p, q, params)
        css = float(np.dot(e, e))
        return css if np.isfinite(css) else np.inf

    f0 = objective(x0)
    if not np.isfinite(f0):
        x0 = np.zeros(1 + p + q)
        f0 = objective(x0)
    if not np.isfinite(f0):
        raise ArimaError("CSS objective is non-finite at every start point")
    result = minimize(objective, x0, method="Nelder-Mead",
                      options=dict(maxiter=400 * x0.size, maxfev=400 * x0.size,
                                   xatol=1e-6,
                                   fatol=max(1e-12, 1e-10 * f0)))
    params = result.x
    css = objective(params)
    if not np.isfinite(css):
        raise ArimaError("CSS objective is non-finite at the fitted parameters")

    e = _css_residuals(w, p, q, params)
    sigma2 = css / (n - p)
    return ArimaModel(order, params[1:1 + p], params[1 + p:],
                      float(params[0]), float(sigma2),
                      tail_w=w[n - p:] if p else np.zeros(0),
                      tail_e=e[e.size - q:] if q else np.zeros(0),
                      tail_levels=tail_levels, **common)


def forecast(model: ArimaModel, horizon: int) -> TimeSeries:
    """Iterated one-step expectations with future innovations set to zero.

    Differencing is inverted by cumulative summation from the retained
    training tail, so the forecast continues the original (undifferenced)
    series. Timestamps continue one step after the training data.
    """
    if horizon < 1:
        raise ArimaError(f"horizon must be >= 1, got {horizon}")
    p, d, q = model.order.p, model.order.d, model.order.q
    w_hist = list(model.tail_w)
    e_hist = list(model.tail_e)
    out = np.empty(horizon)
    for h in range(horizon):
        val = model.intercept
        for i in range(p):
            val += model.phi[i] * w_hist[-1 - i]
        for j in range(q):
            if len(e_hist) > j:
                val += model.theta[j] * e_hist[-1 - j]
        out[h] = val
        w_hist.append(val)
        e_hist.append(0.0)

    for level in range(d - 1, -1, -1):
        out = model.tail_levels[level] + np.cumsum(out)

    step = timedelta(hours=model.step_hours)
    return TimeSeries(model.origin + step, model.step_hours, out, model.name)


def simulate(model: ArimaModel, n: int, seed: int,
             burn_in: int = 100) -> TimeSeries:
    """Drive Gaussian innovations through the ARMA recursion.

    Deterministic under ``seed``. ``burn_in`` pre-samples are generated and
    discarded so the retained stretch starts near the stationary regime
    (pass 0 to keep the zero-initialized transient).
    """
    if n < 1:
        raise ArimaError(f"n must be >= 1, got {n}")
    d = model.order.d
    rng = np.random.default_rng(seed)
    total = n + burn_in
    e = rng.normal(0.0, np.sqrt(model.sigma2), total)
    ar = np.concatenate([[1.0], -model.phi])
    ma = np.concatenate([[1.0], model.theta])
    # zero-initial-state recursion: MA-filtered noise plus the AR response
    # to the constant intercept input
    w = lfilter(ma, ar, e) + lfilter([1.0], ar, np.full(total, model.intercept))
    out = w[burn_in:]
    for _ in range(d):
        out = np.cumsum(out)
    return TimeSeries(model.origin + timedelta(hours=model.step_hours),
                      model.step_hours, out, model.name)


def save_model(path, model: ArimaModel) -> None:
    """Write a model as a flat JSON file."""
    payload = {
        "p": model.order.p, "d": model.order.d, "q": model.order.q,
        "phi": list(model.phi), "theta": list(model.theta),
        "intercept": model.intercept, "sigma2": model.sigma2,
        "tail_w": list(model.tail_w), "tail_e": list(model.tail_e),
        "tail_levels": list(model.tail_levels),
        "origin": model.origin.isoformat(), "step_hours": model.step_hours,
        "name": model.name,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_model(path) -> ArimaModel:
    """Read a model written by :func:`save_model`."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArimaError(f"{path}: not a valid model file: {exc}") from exc
    try:
        return ArimaModel(
            ArimaOrder(payload["p"], payload["d"], payload["q"]),
            np.array(payload["phi"]), np.array(payload["theta"]),
            payload["intercept"], payload["sigma2"],
            tail_w=np.array(payload["tail_w"]),
            tail_e=np.array(payload["tail_e"]),
            tail_levels=np.array(payload["tail_levels"]),
            origin=datetime.fromisoformat(payload["origin"]),
            step_hours=payload["step_hours"], name=payload.get("name", ""))
    except KeyError as exc:
        raise ArimaError(f"{path}: missing field {exc}") from exc
