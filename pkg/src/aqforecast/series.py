"""Uniformly sampled time series, the currency passed between all stages."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np


@dataclass
class TimeSeries:
    """A uniformly sampled numeric sequence.

    Parameters
    ----------
    start : datetime
        Timestamp of the first sample.
    step_hours : float
        Spacing between consecutive samples, in hours.
    values : array-like
        Sample values; must be finite.
    name : str
        Label carried through the pipeline (e.g. the pollutant name).
    """

    start: datetime
    step_hours: float
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if self.step_hours <= 0:
            raise ValueError("step_hours must be positive")
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.name!r} contains non-finite values")

    def __len__(self) -> int:
        return self.values.size

    @property
    def step(self) -> timedelta:
        return timedelta(hours=self.step_hours)

    def timestamps(self) -> list[datetime]:
        """Timestamps of every sample, start + i * step."""
        return [self.start + i * self.step for i in range(len(self))]

    def slice(self, lo: int, hi: int) -> "TimeSeries":
        """Sub-series covering indices [lo, hi)."""
        if not (0 <= lo <= hi <= len(self)):
            raise IndexError(f"slice [{lo}, {hi}) outside series of length {len(self)}")
        return TimeSeries(self.start + lo * self.step, self.step_hours,
                          self.values[lo:hi].copy(), self.name)

    def with_values(self, values, name: str | None = None) -> "TimeSeries":
        """Same time axis, different values (lengths must agree)."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise ValueError("replacement values must match series length")
        return TimeSeries(self.start, self.step_hours, values,
                          self.name if name is None else name)

    def same_grid(self, other: "TimeSeries") -> bool:
        return (self.start == other.start
                and self.step_hours == other.step_hours
                and len(self) == len(other))


def write_series_csv(path, series: TimeSeries, value_header: str = "value") -> None:
    """Write a two-column CSV (timestamp, value) with ISO-8601 timestamps."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"timestamp,{value_header}\n")
        for ts, v in zip(series.timestamps(), series.values):
            fh.write(f"{ts.isoformat()},{v:.10g}\n")


def read_series_csv(path, name: str = "") -> TimeSeries:
    """Read a two-column CSV written by :func:`write_series_csv`.

    The timestamp column must be ISO-8601 and uniformly spaced.
    """
    stamps: list[datetime] = []
    values: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise ValueError(f"{path}: no header")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            ts_text, _, rest = line.partition(",")
            try:
                stamps.append(datetime.fromisoformat(ts_text.strip()))
                values.append(float(rest.split(",")[0]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if len(stamps) < 2:
        raise ValueError(f"{path}: need at least 2 rows")
    step = stamps[1] - stamps[0]
    for i in range(1, len(stamps)):
        if stamps[i] - stamps[i - 1] != step:
            raise ValueError(f"{path}: timestamps not uniformly spaced at row {i + 2}")
    return TimeSeries(stamps[0], step.total_seconds() / 3600.0, np.array(values), name)
