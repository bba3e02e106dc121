"""Tests for CSV loading and the cleaning chain."""

from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqforecast.ingest import (
    DEFAULT_PRESENCE_THRESHOLD,
    YEAR_LAG_STEPS,
    IngestError,
    RawTable,
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
from aqforecast.series import TimeSeries

T0 = datetime(2021, 1, 4)  # a Monday


def hourly_rows(cells_by_row, start=T0):
    return [(start + timedelta(hours=i), list(cells))
            for i, cells in enumerate(cells_by_row)]


class TestLoadCsv:
    def test_three_row_file(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("From Date,PM2.5\n"
                        "01-01-2021 00:00,10\n"
                        "01-01-2021 01:00,11\n"
                        "01-01-2021 02:00,12\n")
        table = load_csv(path)
        assert len(table) == 3
        assert table.column_names == ["PM2.5"]
        assert table.column("PM2.5") == [10.0, 11.0, 12.0]
        assert table.rows[0][0] == datetime(2021, 1, 1, 0, 0)

    def test_duplicate_pollutant_columns_both_kept(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("From Date,Xylene (ug/m3),Xylene ()\n"
                        "01-01-2021 00:00,1,\n"
                        "01-01-2021 01:00,,2\n")
        table = load_csv(path)
        assert table.column_names == ["Xylene (ug/m3)", "Xylene ()"]
        assert table.column("Xylene (ug/m3)") == [1.0, None]
        assert table.column("Xylene ()") == [None, 2.0]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(IngestError, match="no header"):
            load_csv(path)

    def test_missing_from_date(self, tmp_path):
        path = tmp_path / "nofd.csv"
        path.write_text("Date,PM2.5\n01-01-2021 00:00,10\n")
        with pytest.raises(IngestError, match="From Date"):
            load_csv(path)

    def test_bad_timestamp_reports_row(self, tmp_path):
        path = tmp_path / "badts.csv"
        path.write_text("From Date,PM2.5\n"
                        "01-01-2021 00:00,10\n"
                        "not-a-date,11\n")
        with pytest.raises(IngestError, match="row 3"):
            load_csv(path)

    def test_to_date_validated_and_discarded(self, tmp_path):
        path = tmp_path / "todate.csv"
        path.write_text("From Date,To Date,PM2.5\n"
                        "01-01-2021 00:00,01-01-2021 01:00,10\n")
        table = load_csv(path)
        assert table.column_names == ["PM2.5"]
        bad = tmp_path / "badto.csv"
        bad.write_text("From Date,To Date,PM2.5\n"
                       "01-01-2021 00:00,garbage,10\n")
        with pytest.raises(IngestError, match="To Date"):
            load_csv(bad)

    def test_missing_tokens(self, tmp_path):
        path = tmp_path / "na.csv"
        path.write_text("From Date,PM2.5,NO2\n"
                        "01-01-2021 00:00,NA,5\n"
                        "01-01-2021 01:00,None,-\n")
        table = load_csv(path)
        assert table.column("PM2.5") == [None, None]
        assert table.column("NO2") == [5.0, None]

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestError, match="cannot read"):
            load_csv(tmp_path / "does-not-exist.csv")

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "blank.csv"
        path.write_text("From Date,PM2.5\n"
                        "01-01-2021 00:00,10\n"
                        "\n"
                        "01-01-2021 01:00,11\n")
        assert len(load_csv(path)) == 2


class TestResampleHourly:
    def test_minutes_truncated_and_averaged(self):
        rows = [(datetime(2021, 1, 1, 0, 10), [10.0]),
                (datetime(2021, 1, 1, 0, 50), [20.0]),
                (datetime(2021, 1, 1, 1, 0), [30.0])]
        out = resample_hourly(RawTable(["x"], rows))
        assert len(out) == 2
        assert out.column("x") == [15.0, 30.0]
        assert out.rows[0][0] == datetime(2021, 1, 1, 0, 0)

    def test_gap_filled_with_missing(self):
        rows = [(datetime(2021, 1, 1, 0), [1.0]),
                (datetime(2021, 1, 1, 3), [4.0])]
        out = resample_hourly(RawTable(["x"], rows))
        assert len(out) == 4
        assert out.column("x") == [1.0, None, None, 4.0]

    def test_unsorted_input_sorted(self):
        rows = [(datetime(2021, 1, 1, 2), [3.0]),
                (datetime(2021, 1, 1, 0), [1.0]),
                (datetime(2021, 1, 1, 1), [2.0])]
        out = resample_hourly(RawTable(["x"], rows))
        assert out.column("x") == [1.0, 2.0, 3.0]

    def test_empty_table_rejected(self):
        with pytest.raises(IngestError):
            resample_hourly(RawTable(["x"], []))


class TestMergeDuplicateColumns:
    def test_unit_suffix_collision(self):
        table = RawTable(["Xylene (ug/m3)", "Xylene ()"],
                         hourly_rows([[1.0, None], [None, 2.0]]))
        out = merge_duplicate_columns(table)
        assert out.column_names == ["Xylene"]
        assert out.column("Xylene") == [1.0, 2.0]

    def test_no_collision_is_identity(self):
        table = RawTable(["PM2.5", "NO2"], hourly_rows([[1.0, 2.0]]))
        assert merge_duplicate_columns(table) is table

    def test_both_present_takes_mean(self):
        table = RawTable(["A (x)", "A (y)"], hourly_rows([[2.0, 4.0]]))
        out = merge_duplicate_columns(table)
        assert out.column("A") == [3.0]

    def test_case_folded(self):
        table = RawTable(["pm2.5", "PM2.5 (ug/m3)"],
                         hourly_rows([[None, 7.0]]))
        out = merge_duplicate_columns(table)
        assert len(out.column_names) == 1
        assert out.rows[0][1] == [7.0]

    def test_row_count_preserved(self):
        table = RawTable(["A ()", "A"], hourly_rows([[1.0, None]] * 5))
        assert len(merge_duplicate_columns(table)) == 5


class TestDropSparseColumns:
    def table(self):
        # col "half" present in 2/4 rows (50%), "full" in 4/4
        rows = hourly_rows([[1.0, 1.0], [None, 2.0], [1.0, 3.0], [None, 4.0]])
        return RawTable(["half", "full"], rows)

    def test_half_present_dropped_at_default(self):
        out = drop_sparse_columns(self.table(), DEFAULT_PRESENCE_THRESHOLD)
        assert out.column_names == ["full"]

    def test_threshold_zero_keeps_all(self):
        out = drop_sparse_columns(self.table(), 0.0)
        assert out.column_names == ["half", "full"]

    def test_fully_present_always_kept(self):
        out = drop_sparse_columns(self.table(), 1.0)
        assert "full" in out.column_names

    def test_exact_threshold_kept(self):
        out = drop_sparse_columns(self.table(), 0.5)
        assert out.column_names == ["half", "full"]

    def test_bad_threshold(self):
        with pytest.raises(IngestError):
            drop_sparse_columns(self.table(), 1.5)


class TestImpute:
    def test_forward_fill(self):
        table = RawTable(["x"], hourly_rows([[1.0], [None], [None], [4.0]]))
        assert impute(table).column("x") == [1.0, 1.0, 1.0, 4.0]

    def test_leading_gap_gets_mean(self):
        table = RawTable(["x"], hourly_rows([[None], [2.0], [4.0]]))
        assert impute(table).column("x") == [3.0, 2.0, 4.0]

    def test_no_missing_is_identity_values(self):
        table = RawTable(["x"], hourly_rows([[1.0], [2.0]]))
        assert impute(table).column("x") == [1.0, 2.0]

    def test_entirely_missing_column_raises(self):
        table = RawTable(["good", "bad"],
                         hourly_rows([[1.0, None], [2.0, None]]))
        with pytest.raises(IngestError, match="'bad'"):
            impute(table)


class TestExtractSeries:
    def test_extracts(self):
        table = RawTable(["x"], hourly_rows([[1.0], [2.0], [3.0]]))
        s = extract_series(table, "x")
        assert isinstance(s, TimeSeries)
        assert list(s.values) == [1.0, 2.0, 3.0]
        assert s.step_hours == 1.0 and s.name == "x"

    def test_missing_cells_rejected(self):
        table = RawTable(["x"], hourly_rows([[1.0], [None]]))
        with pytest.raises(IngestError, match="impute"):
            extract_series(table, "x")

    def test_unknown_column(self):
        table = RawTable(["x"], hourly_rows([[1.0]]))
        with pytest.raises(IngestError, match="no column"):
            extract_series(table, "y")

    def test_non_hourly_grid_rejected(self):
        rows = [(T0, [1.0]), (T0 + timedelta(hours=2), [2.0])]
        with pytest.raises(IngestError, match="hourly"):
            extract_series(RawTable(["x"], rows), "x")


class TestRemoveOutliers:
    def mk(self, values):
        return TimeSeries(T0, 1.0, values, "x")

    def test_spike_clipped_to_fence(self):
        # order-statistic quartiles of [1,1,1,1,100]: Q1 = Q3 = 1, IQR = 0,
        # so the upper fence is 1 and the spike collapses onto it
        out = remove_outliers(self.mk([1.0, 1.0, 1.0, 1.0, 100.0]), 1.5)
        assert list(out.values) == [1.0, 1.0, 1.0, 1.0, 1.0]

    def test_all_equal_unchanged(self):
        out = remove_outliers(self.mk([5.0] * 6))
        assert list(out.values) == [5.0] * 6

    def test_inliers_untouched(self):
        vals = [1.0, 2.0, 3.0, 4.0, 5.0]
        out = remove_outliers(self.mk(vals))
        assert list(out.values) == vals

    def test_known_fences(self):
        # sorted data 0..7: Q1(lower)=data[1]=1, Q3(higher)=data[6]=30;
        # k=1: fences [-28, 59] so 100 -> 59, -40 -> -28
        vals = [1.0, 2.0, 3.0, 10.0, 20.0, 30.0, 100.0, -40.0]
        out = remove_outliers(self.mk(vals), 1.0)
        assert out.values.max() == pytest.approx(59.0)
        assert out.values.min() == pytest.approx(-28.0)

    def test_too_short(self):
        with pytest.raises(IngestError, match="4"):
            remove_outliers(self.mk([1.0, 2.0, 3.0]))

    def test_bad_multiplier(self):
        with pytest.raises(IngestError):
            remove_outliers(self.mk([1.0] * 5), 0.0)


class TestAddFeatures:
    def test_calendar_features(self):
        s = TimeSeries(T0, 1.0, np.arange(48.0), "x")  # Monday midnight
        frame = add_features(s)
        assert frame.features["hour"].values[0] == 0
        assert frame.features["dayofweek"].values[0] == 0
        assert frame.features["hour"].values[25] == 1
        assert frame.features["dayofweek"].values[25] == 1
        assert frame.features["month"].values[0] == 1
        assert frame.features["year"].values[0] == 2021

    def test_lag_feature_on_long_series(self):
        n = YEAR_LAG_STEPS + 10
        s = TimeSeries(T0, 1.0, np.arange(float(n)), "x")
        frame = add_features(s)
        assert len(frame.target) == 10
        assert "lag_1y" in frame.features
        # lag value = target value one year earlier
        assert list(frame.features["lag_1y"].values) == list(range(10))
        assert list(frame.target.values) == [YEAR_LAG_STEPS + i
                                             for i in range(10)]
        assert frame.warnings == ()

    def test_short_series_warns_and_omits_lag(self):
        s = TimeSeries(T0, 1.0, np.arange(100.0), "x")
        frame = add_features(s)
        assert "lag_1y" not in frame.features
        assert frame.warnings
        assert len(frame.target) == 100

    def test_fractional_step_rejected(self):
        s = TimeSeries(T0, 0.5, np.arange(10.0), "x")
        with pytest.raises(IngestError, match="whole-hour"):
            add_features(s)

    def test_features_aligned(self):
        s = TimeSeries(T0, 1.0, np.arange(72.0), "x")
        frame = add_features(s)
        for feat in frame.features.values():
            assert feat.same_grid(frame.target)


class TestCleanPipeline:
    def write_raw(self, tmp_path):
        # 30 hours; PM2.5 has gaps + a spike; junk is 90% missing;
        # Xylene split across two unit-suffixed columns
        lines = ["From Date,To Date,PM2.5 (ug/m3),Xylene (ug/m3),Xylene (),junk"]
        base = datetime(2021, 1, 1)
        for i in range(30):
            ts = base + timedelta(hours=i)
            pm = "" if i in (5, 6) else ("500" if i == 20 else f"{10 + i % 5}")
            xa = f"{i}" if i % 2 == 0 else ""
            xb = f"{i}" if i % 2 == 1 else ""
            junk = "1" if i in (3, 7, 11) else ""
            stamp = ts.strftime("%d-%m-%Y %H:%M")
            end = (ts + timedelta(hours=1)).strftime("%d-%m-%Y %H:%M")
            lines.append(f"{stamp},{end},{pm},{xa},{xb},{junk}")
        path = tmp_path / "raw.csv"
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_end_to_end(self, tmp_path):
        path = self.write_raw(tmp_path)
        table, target = clean_pipeline([path], "PM2.5 (ug/m3)")
        assert "junk" not in table.column_names
        assert "Xylene" in table.column_names
        assert len(target) == 30
        # gaps forward-filled, spike winsorized below its raw value
        assert np.isfinite(target.values).all()
        assert target.values.max() < 500.0
        assert target.values[5] == target.values[4]
        # xylene columns interleave to the full 0..29 ramp
        assert table.column("Xylene") == [float(i) for i in range(30)]

    def test_target_resolved_after_merge(self, tmp_path):
        # target column itself gets a unit suffix stripped by the merge
        path = tmp_path / "m.csv"
        path.write_text("From Date,PM2.5 (ug/m3),PM2.5 ()\n"
                        "01-01-2021 00:00,1,\n"
                        "01-01-2021 01:00,,2\n"
                        "01-01-2021 02:00,3,\n"
                        "01-01-2021 03:00,,4\n")
        table, target = clean_pipeline([path], "PM2.5 (ug/m3)")
        assert list(target.values) == [1.0, 2.0, 3.0, 4.0]

    def test_winsorized_target_written_back(self, tmp_path):
        # PM2.5 has no colliding partner, so the merge keeps its full label
        path = self.write_raw(tmp_path)
        table, target = clean_pipeline([path], "PM2.5 (ug/m3)")
        col = table.column("PM2.5 (ug/m3)")
        assert col == list(target.values)

    def test_no_files(self):
        with pytest.raises(IngestError):
            clean_pipeline([], "x")


class TestWriteTableCsv:
    def test_roundtrip_through_load(self, tmp_path):
        table = RawTable(["PM2.5"], hourly_rows([[1.5], [None], [2.5]]))
        path = tmp_path / "out.csv"
        write_table_csv(path, table)
        back = load_csv(path)
        assert back.column("PM2.5") == [1.5, None, 2.5]
        assert back.rows[0][0] == T0


# --- property tests over structural invariants ---

cell = st.one_of(st.none(), st.floats(-100, 100, allow_nan=False,
                                      allow_infinity=False))


@st.composite
def tables(draw, min_rows=2, max_rows=12, min_cols=1, max_cols=4):
    n_rows = draw(st.integers(min_rows, max_rows))
    n_cols = draw(st.integers(min_cols, max_cols))
    grid = [[draw(cell) for _ in range(n_cols)] for _ in range(n_rows)]
    names = [f"c{i}" for i in range(n_cols)]
    return RawTable(names, hourly_rows(grid))


class TestProperties:
    @given(tables())
    @settings(max_examples=50, deadline=None)
    def test_impute_leaves_no_missing(self, table):
        try:
            out = impute(table)
        except IngestError:
            # a column with no present cell at all cannot be imputed
            assert any(all(cells[i] is None for _, cells in table.rows)
                       for i in range(len(table.column_names)))
            return
        for _, cells in out.rows:
            assert all(c is not None for c in cells)

    @given(tables(), st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=50, deadline=None)
    def test_drop_sparse_monotone(self, table, t1, t2):
        lo, hi = sorted((t1, t2))
        kept_hi = set(drop_sparse_columns(table, hi).column_names)
        kept_lo = set(drop_sparse_columns(table, lo).column_names)
        assert kept_hi <= kept_lo

    @given(st.lists(st.floats(-1e4, 1e4, allow_nan=False,
                              allow_infinity=False),
                    min_size=4, max_size=40),
           st.floats(0.1, 5.0))
    @settings(max_examples=60, deadline=None)
    def test_remove_outliers_idempotent(self, values, k):
        s = TimeSeries(T0, 1.0, values, "x")
        once = remove_outliers(s, k)
        twice = remove_outliers(once, k)
        assert np.array_equal(once.values, twice.values)

    @given(tables(min_cols=2, max_cols=4))
    @settings(max_examples=50, deadline=None)
    def test_merge_preserves_rows_and_presence(self, table):
        # force a collision by renaming the last column to shadow the first
        names = list(table.column_names)
        names[-1] = names[0] + " (ug/m3)"
        table = RawTable(names, table.rows)
        out = merge_duplicate_columns(table)
        assert len(out) == len(table)
        first = table.column_names.index(names[0])
        last = len(names) - 1
        merged = out.column_names.index(names[0])
        for (_, old), (_, new) in zip(table.rows, out.rows):
            if old[first] is not None or old[last] is not None:
                assert new[merged] is not None
