"""Tests for the TimeSeries container and its CSV round trip."""

from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqforecast.series import TimeSeries, read_series_csv, write_series_csv

START = datetime(2021, 1, 4)


class TestTimeSeries:
    def test_basic_fields(self):
        s = TimeSeries(START, 1.0, [1.0, 2.0, 3.0], "pm25")
        assert len(s) == 3
        assert s.step == timedelta(hours=1)
        assert s.name == "pm25"
        assert s.values.dtype == float

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            TimeSeries(START, 1.0, [1.0, np.nan], "x")
        with pytest.raises(ValueError):
            TimeSeries(START, 1.0, [np.inf], "x")

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            TimeSeries(START, 0.0, [1.0], "x")
        with pytest.raises(ValueError):
            TimeSeries(START, -1.0, [1.0], "x")

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            TimeSeries(START, 1.0, np.zeros((2, 2)), "x")

    def test_timestamps(self):
        s = TimeSeries(START, 2.0, [0.0, 0.0, 0.0], "x")
        ts = s.timestamps()
        assert ts == [START, START + timedelta(hours=2),
                      START + timedelta(hours=4)]

    def test_slice(self):
        s = TimeSeries(START, 1.0, np.arange(10.0), "x")
        sub = s.slice(3, 7)
        assert sub.start == START + timedelta(hours=3)
        assert list(sub.values) == [3.0, 4.0, 5.0, 6.0]
        assert sub.name == "x"

    def test_slice_bounds_checked(self):
        s = TimeSeries(START, 1.0, np.arange(5.0), "x")
        with pytest.raises(IndexError):
            s.slice(2, 6)
        with pytest.raises(IndexError):
            s.slice(-1, 3)

    def test_with_values(self):
        s = TimeSeries(START, 1.0, np.arange(4.0), "x")
        t = s.with_values(np.ones(4), "y")
        assert t.same_grid(s) and t.name == "y"
        with pytest.raises(ValueError):
            s.with_values(np.ones(5))

    def test_same_grid(self):
        a = TimeSeries(START, 1.0, np.zeros(5), "a")
        assert a.same_grid(TimeSeries(START, 1.0, np.ones(5), "b"))
        assert not a.same_grid(TimeSeries(START, 2.0, np.zeros(5), "c"))
        assert not a.same_grid(TimeSeries(START, 1.0, np.zeros(6), "d"))


class TestSeriesCsv:
    def test_roundtrip(self, tmp_path):
        s = TimeSeries(START, 1.0, [1.5, -2.25, 3.125, 1e-7], "pm25")
        path = tmp_path / "s.csv"
        write_series_csv(path, s, value_header="pm25")
        back = read_series_csv(path, name="pm25")
        assert back.same_grid(s)
        assert np.allclose(back.values, s.values, rtol=1e-9)
        assert path.read_text().splitlines()[0] == "timestamp,pm25"

    def test_rejects_nonuniform(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("timestamp,value\n"
                        "2021-01-01T00:00:00,1\n"
                        "2021-01-01T01:00:00,2\n"
                        "2021-01-01T03:00:00,3\n")
        with pytest.raises(ValueError, match="uniform"):
            read_series_csv(path)

    def test_rejects_single_row(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("timestamp,value\n2021-01-01T00:00:00,1\n")
        with pytest.raises(ValueError, match="2 rows"):
            read_series_csv(path)

    def test_reports_row_of_bad_value(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("timestamp,value\n"
                        "2021-01-01T00:00:00,1\n"
                        "2021-01-01T01:00:00,oops\n")
        with pytest.raises(ValueError, match=":3"):
            read_series_csv(path)

    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False,
                              allow_infinity=False, width=32),
                    min_size=2, max_size=40))
    @settings(max_examples=30, deadline=None)
    def test_roundtrip_property(self, values):
        import tempfile

        s = TimeSeries(START, 1.0, values, "v")
        with tempfile.TemporaryDirectory() as tmp:
            path = f"{tmp}/s.csv"
            write_series_csv(path, s)
            back = read_series_csv(path)
        assert np.allclose(back.values, s.values, rtol=1e-9, atol=1e-12)
