"""Raw monitoring CSVs -> clean, feature-augmented, uniformly indexed series.

The cleaning chain mirrors how station-portal exports are usually prepared:
parse timestamps, snap rows to an hourly grid, merge columns that are the
same pollutant under different unit suffixes, drop columns that are mostly
missing, forward-fill plus mean-impute the rest, winsorize outliers, and
derive calendar/lag features.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .series import TimeSeries

__all__ = [
    "IngestError",
    "RawTable",
    "FeatureFrame",
    "load_csv",
    "resample_hourly",
    "merge_duplicate_columns",
    "drop_sparse_columns",
    "impute",
    "extract_series",
    "remove_outliers",
    "add_features",
    "write_table_csv",
]

#: Presence fraction below which a column is considered too sparse to keep.
DEFAULT_PRESENCE_THRESHOLD = 0.6

#: Lag of the "same hour one year ago" feature, in hourly steps.
YEAR_LAG_STEPS = 365 * 24

_TIMESTAMP_FORMATS = ("%d-%m-%Y %H:%M", "%d-%m-%Y %H:%M:%S")
_MISSING_TOKENS = {"", "na", "nan", "none", "null", "-"}


class IngestError(ValueError):
    """Raised for unreadable, malformed, or degenerate input data."""


@dataclass
class RawTable:
    """Parsed CSV contents before they become a :class:`TimeSeries`.

    ``rows`` holds ``(timestamp, cells)`` pairs where each cell is a float
    or None for a missing value; every row has exactly ``len(column_names)``
    cells.
    """

    column_names: list[str]
    rows: list[tuple[datetime, list[float | None]]]
    source_id: str = ""

    def __post_init__(self):
        width = len(self.column_names)
        for ts, cells in self.rows:
            if len(cells) != width:
                raise IngestError(
                    f"{self.source_id}: row at {ts} has {len(cells)} cells, "
                    f"expected {width}")

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[float | None]:
        idx = self.column_names.index(name)
        return [cells[idx] for _, cells in self.rows]


@dataclass
class FeatureFrame:
    """A target series plus aligned calendar/lag feature series."""

    index: list[datetime]
    target: TimeSeries
    features: dict[str, TimeSeries] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        for name, feat in self.features.items():
            if not feat.same_grid(self.target):
                raise IngestError(f"feature {name!r} not aligned with target")
        if len(self.index) != len(self.target):
            raise IngestError("index length does not match target length")


def _parse_timestamp(text: str) -> datetime:
    text = text.strip()
    for fmt in _TIMESTAMP_FORMATS:
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            pass
    return datetime.fromisoformat(text)


def _parse_cell(text: str) -> float | None:
    text = text.strip()
    if text.lower() in _MISSING_TOKENS:
        return None
    try:
        return float(text)
    except ValueError:
        return None


def load_csv(path) -> RawTable:
    """Load one monitoring CSV into a :class:`RawTable`.

    The file must have a header row containing a ``From Date`` column, which
    becomes the row timestamp. A ``To Date`` column, if present, is checked
    for parseability and then discarded. Cells that are empty or ``NA`` are
    treated as missing.
    """
    try:
        fh = open(path, "r", encoding="utf-8-sig", newline="")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: no header") from None
        header = [h.strip() for h in header]
        if "From Date" not in header:
            raise IngestError(f"{path}: missing 'From Date' column")
        from_idx = header.index("From Date")
        to_idx = header.index("To Date") if "To Date" in header else None

        value_idx = [i for i in range(len(header)) if i not in (from_idx, to_idx)]
        column_names = [header[i] for i in value_idx]

        rows: list[tuple[datetime, list[float | None]]] = []
        for rownum, record in enumerate(reader, start=2):
            if not any(cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise IngestError(
                    f"{path}: row {rownum} has {len(record)} fields, "
                    f"expected {len(header)}")
            try:
                ts = _parse_timestamp(record[from_idx])
            except ValueError:
                raise IngestError(
                    f"{path}: row {rownum}: unparseable timestamp "
                    f"{record[from_idx]!r}") from None
            if to_idx is not None and record[to_idx].strip():
                try:
                    _parse_timestamp(record[to_idx])
                except ValueError:
                    raise IngestError(
                        f"{path}: row {rownum}: unparseable 'To Date' "
                        f"{record[to_idx]!r}") from None
            rows.append((ts, [_parse_cell(record[i]) for i in value_idx]))
    return RawTable(column_names, rows, source_id=str(path))


def resample_hourly(table: RawTable) -> RawTable:
    """Snap rows to an hourly grid.

    Minutes and seconds are truncated; rows that land on the same hour are
    averaged cell-wise over their present values. Hours missing from the
    span are inserted with all cells missing, so the output covers a
    contiguous hourly grid sorted ascending.
    """
    if not table.rows:
        raise IngestError(f"{table.source_id}: no data rows")
    width = len(table.column_names)
    buckets: dict[datetime, list[list[float]]] = {}
    for ts, cells in table.rows:
        hour = ts.replace(minute=0, second=0, microsecond=0)
        bucket = buckets.setdefault(hour, [[] for _ in range(width)])
        for i, cell in enumerate(cells):
            if cell is not None:
                bucket[i].append(cell)
    first, last = min(buckets), max(buckets)
    rows: list[tuple[datetime, list[float | None]]] = []
    hour = first
    while hour <= last:
        bucket = buckets.get(hour)
        if bucket is None:
            rows.append((hour, [None] * width))
        else:
            rows.append((hour, [sum(vals) / len(vals) if vals else None
                                for vals in bucket]))
        hour += timedelta(hours=1)
    return RawTable(list(table.column_names), rows, table.source_id)


def _base_name(name: str) -> str:
    """Column name with any trailing parenthesized unit stripped, casefolded."""
    return re.sub(r"\s*\([^)]*\)\s*$", "", name).strip().casefold()


def _display_name(name: str) -> str:
    return re.sub(r"\s*\([^)]*\)\s*$", "", name).strip()


def merge_duplicate_columns(table: RawTable) -> RawTable:
    """Merge columns that are the same quantity under different labels.

    Columns collide when their base names agree after the unit suffix (or
    empty parentheses) is stripped and case is folded, e.g. ``Xylene (ug/m3)``
    and ``Xylene ()``. Colliding columns are combined cell-wise: a present
    value wins over a missing one, and two present values are averaged.
    """
    groups: dict[str, list[int]] = {}
    order: list[str] = []
    for i, name in enumerate(table.column_names):
        base = _base_name(name)
        if base not in groups:
            groups[base] = []
            order.append(base)
        groups[base].append(i)

    if all(len(idxs) == 1 for idxs in groups.values()):
        return table

    new_names = []
    for base in order:
        idxs = groups[base]
        first = table.column_names[idxs[0]]
        new_names.append(first if len(idxs) == 1 else _display_name(first))

    new_rows: list[tuple[datetime, list[float | None]]] = []
    for ts, cells in table.rows:
        merged: list[float | None] = []
        for base in order:
            present = [cells[i] for i in groups[base] if cells[i] is not None]
            merged.append(sum(present) / len(present) if present else None)
        new_rows.append((ts, merged))
    return RawTable(new_names, new_rows, table.source_id)


def drop_sparse_columns(table: RawTable,
                        presence_threshold: float = DEFAULT_PRESENCE_THRESHOLD,
                        ) -> RawTable:
    """Drop columns whose fraction of present cells is below the threshold."""
    if not 0.0 <= presence_threshold <= 1.0:
        raise IngestError("presence_threshold must lie in [0, 1]")
    if not table.rows:
        return table
    n = len(table.rows)
    keep: list[int] = []
    for i in range(len(table.column_names)):
        present = sum(1 for _, cells in table.rows if cells[i] is not None)
        if present / n >= presence_threshold:
            keep.append(i)
    if len(keep) == len(table.column_names):
        return table
    return RawTable([table.column_names[i] for i in keep],
                    [(ts, [cells[i] for i in keep]) for ts, cells in table.rows],
                    table.source_id)


def impute(table: RawTable) -> RawTable:
    """Fill missing cells: forward fill, then column mean for leading gaps.

    The mean is taken over the originally present cells. A column with no
    present cell at all cannot be imputed and raises.
    """
    n_cols = len(table.column_names)
    columns: list[list[float | None]] = [[cells[i] for _, cells in table.rows]
                                         for i in range(n_cols)]
    for i, col in enumerate(columns):
        present = [v for v in col if v is not None]
        if not present:
            raise IngestError(
                f"column {table.column_names[i]!r} is entirely missing")
        mean = sum(present) / len(present)
        last: float | None = None
        for j, v in enumerate(col):
            if v is None:
                col[j] = mean if last is None else last
            else:
                last = v
    rows = [(ts, [columns[i][j] for i in range(n_cols)])
            for j, (ts, _) in enumerate(table.rows)]
    return RawTable(list(table.column_names), rows, table.source_id)


def extract_series(table: RawTable, column: str) -> TimeSeries:
    """Pull one fully imputed column out as a :class:`TimeSeries`.

    The table must already sit on a contiguous hourly grid (see
    :func:`resample_hourly`) with no missing cells in the chosen column.
    """
    if column not in table.column_names:
        raise IngestError(f"no column {column!r}; have {table.column_names}")
    if not table.rows:
        raise IngestError("empty table")
    values = table.column(column)
    if any(v is None for v in values):
        raise IngestError(f"column {column!r} still has missing cells; "
                          "run impute() first")
    stamps = [ts for ts, _ in table.rows]
    for k in range(1, len(stamps)):
        if stamps[k] - stamps[k - 1] != timedelta(hours=1):
            raise IngestError(f"rows not on an hourly grid near {stamps[k]}; "
                              "run resample_hourly() first")
    return TimeSeries(stamps[0], 1.0, np.array(values, dtype=float), column)


def remove_outliers(series: TimeSeries, iqr_multiplier: float = 1.5) -> TimeSeries:
    """Winsorize values outside the Tukey fences Q1 - k*IQR, Q3 + k*IQR.

    Values beyond a fence are replaced by the fence itself, so the series
    keeps its length and sampling. Quartiles are taken as order statistics
    (no interpolation): winsorizing cannot move them, which keeps the fences
    fixed under re-application.
    """
    if iqr_multiplier <= 0:
        raise IngestError("iqr_multiplier must be positive")
    if len(series) < 4:
        raise IngestError(f"need at least 4 points to estimate fences, "
                          f"got {len(series)}")
    q1 = np.percentile(series.values, 25, method="lower")
    q3 = np.percentile(series.values, 75, method="higher")
    iqr = q3 - q1
    lo = q1 - iqr_multiplier * iqr
    hi = q3 + iqr_multiplier * iqr
    return series.with_values(np.clip(series.values, lo, hi))


def add_features(target: TimeSeries) -> FeatureFrame:
    """Derive calendar features and the one-year lag from the target.

    Features: hour (0-23), dayofweek (0=Monday), month (1-12), year, and
    ``lag_1y`` = target shifted by 365*24 steps. Rows with no defined lag
    value are excluded; if the series is too short for any lag value the
    frame is emitted without the lag feature and a warning flag is set.
    """
    if target.step_hours != int(target.step_hours):
        raise IngestError("add_features requires a whole-hour step")

    warnings: tuple[str, ...] = ()
    if len(target) >= YEAR_LAG_STEPS + 1:
        offset = YEAR_LAG_STEPS
        lag_values = target.values[:len(target) - offset]
        trimmed = target.slice(offset, len(target))
    else:
        offset = 0
        lag_values = None
        trimmed = target.slice(0, len(target))
        warnings = ("series shorter than one year; lag feature omitted",)

    index = trimmed.timestamps()
    hour = [ts.hour for ts in index]
    dow = [ts.weekday() for ts in index]
    month = [ts.month for ts in index]
    year = [ts.year for ts in index]

    features = {
        "hour": trimmed.with_values(hour, "hour"),
        "dayofweek": trimmed.with_values(dow, "dayofweek"),
        "month": trimmed.with_values(month, "month"),
        "year": trimmed.with_values(year, "year"),
    }
    if lag_values is not None:
        features["lag_1y"] = trimmed.with_values(lag_values, "lag_1y")
    return FeatureFrame(index, trimmed, features, warnings)


def write_table_csv(path, table: RawTable) -> None:
    """Write a table as CSV with ISO-8601 timestamps in the first column."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["From Date"] + table.column_names)
        for ts, cells in table.rows:
            writer.writerow([ts.isoformat()]
                            + ["" if c is None else f"{c:.10g}" for c in cells])


def clean_pipeline(paths, target_column: str,
                   presence_threshold: float = DEFAULT_PRESENCE_THRESHOLD,
                   iqr_multiplier: float = 1.5) -> tuple[RawTable, TimeSeries]:
    """Full cleaning chain over one or more raw CSVs sharing a schema.

    Loads each file, concatenates rows, snaps to the hourly grid, merges
    duplicate columns, drops sparse ones, imputes, and winsorizes the target
    column. Outlier handling runs after imputation (configurable by calling
    the steps individually). Returns the cleaned table and the target series.
    """
    tables = [load_csv(p) for p in paths]
    if not tables:
        raise IngestError("no input files")
    names = tables[0].column_names
    rows: list[tuple[datetime, list[float | None]]] = []
    for tab in tables:
        if tab.column_names != names:
            raise IngestError(f"{tab.source_id}: column mismatch with "
                              f"{tables[0].source_id}")
        rows.extend(tab.rows)
    merged = RawTable(names, rows, source_id=tables[0].source_id)
    merged = resample_hourly(merged)
    merged = merge_duplicate_columns(merged)
    merged = drop_sparse_columns(merged, presence_threshold)
    merged = impute(merged)
    if target_column not in merged.column_names:
        # the merge step may have stripped a unit suffix off the target label
        base = _base_name(target_column)
        matches = [c for c in merged.column_names if _base_name(c) == base]
        if len(matches) == 1:
            target_column = matches[0]
    target = extract_series(merged, target_column)
    target = remove_outliers(target, iqr_multiplier)

    idx = merged.column_names.index(target_column)
    rows = [(ts, cells[:idx] + [float(target.values[j])] + cells[idx + 1:])
            for j, (ts, cells) in enumerate(merged.rows)]
    return RawTable(merged.column_names, rows, merged.source_id), target
