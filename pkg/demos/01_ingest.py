"""
Cleaning a raw air-quality export into an hourly modeling table
===============================================================

Station exports arrive messy: duplicated pollutant columns from sensor
swaps, gaps, mixed missing-value spellings, and the occasional wild spike.
This walk-through fabricates such a file, then runs it through each
cleaning step so you can watch the table improve.
"""

from pathlib import Path

import numpy as np

from aqforecast.ingest import (
    add_features,
    clean_pipeline,
    drop_sparse_columns,
    extract_series,
    impute,
    load_csv,
    merge_duplicate_columns,
    remove_outliers,
    resample_hourly,
    write_table_csv,
)

out_dir = Path(__file__).parent / "output" / "01_ingest"
out_dir.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(42)

# ---------------------------------------------------------------------------
# Fabricate ten days of raw station data. Two columns share the PM2.5 base
# name (an old and a new sensor), one column is mostly absent, and a couple
# of readings are absurd spikes.
n_hours = 240
lines = ["From Date,To Date,PM2.5 (ug/m3),PM2.5,NO2 (ug/m3),Benzene (ug/m3)"]
true_pm = 55 + 15 * np.sin(2 * np.pi * np.arange(n_hours) / 24)
for h in range(n_hours):
    day, hour = divmod(h, 24)
    stamp = f"{day + 1:02d}-01-2021 {hour:02d}:00"
    stop = f"{day + 1:02d}-01-2021 {hour:02d}:59"
    pm = true_pm[h] + rng.normal(0, 3)
    # the old sensor reports even hours, the new one odd hours
    pm_old = f"{pm:.1f}" if h % 2 == 0 else "NA"
    pm_new = f"{pm + 0.5:.1f}" if h % 2 == 1 else ""
    no2 = f"{28 + rng.normal(0, 2):.1f}"
    benzene = f"{1.2:.1f}" if h % 5 == 0 else "None"  # 20% present: sparse
    if h in (60, 150):
        pm_old, pm_new = "999", "999"  # instrument glitch
    lines.append(f"{stamp},{stop},{pm_old},{pm_new},{no2},{benzene}")
raw_path = out_dir / "raw_station.csv"
raw_path.write_text("\n".join(lines) + "\n")
print(f"wrote {raw_path} with {n_hours} rows")

# ---------------------------------------------------------------------------
# Step by step: load, snap to the hourly grid, merge duplicate columns.
table = load_csv(raw_path)
print(f"\nloaded columns: {table.column_names}")

table = resample_hourly(table)
table = merge_duplicate_columns(table)
print(f"after merging duplicates: {table.column_names}")

# The Benzene column is present in only 20% of rows, well under the 0.6
# presence threshold, so it is dropped rather than imputed from thin air.
table = drop_sparse_columns(table)
print(f"after dropping sparse columns: {table.column_names}")

table = impute(table)
pm_series = extract_series(table, "PM2.5")
print(f"\nimputed PM2.5: {len(pm_series)} hourly values, "
      f"max before winsorizing {pm_series.values.max():.1f}")

# Winsorize with IQR fences: the 999 glitches get pulled to the fence.
clipped = remove_outliers(pm_series)
print(f"max after winsorizing {clipped.values.max():.1f}")

# ---------------------------------------------------------------------------
# The one-call version of the same chain, plus calendar/lag features.
clean_table, target = clean_pipeline([raw_path], "PM2.5 (ug/m3)")
write_table_csv(out_dir / "clean.csv", clean_table)
frame = add_features(target)
print(f"\nclean_pipeline target column: {target.name!r}")
print(f"features: {sorted(frame.features)}")
if frame.warnings:
    print(f"feature warnings: {frame.warnings}")
print(f"\nartifacts in {out_dir}")
