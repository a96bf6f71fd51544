from datetime import datetime, timezone

import numpy as np
import pytest

from loadcast.codec import encode
from loadcast.core import (
    PromptFormat,
    Resolution,
    RunConfig,
    WindowSpec,
    make_instances,
)
from loadcast.data import (
    DuplicateTimestamp,
    GapError,
    ParseError,
    SchemaError,
    SpanTooShort,
    export_jsonl,
    import_jsonl,
    ingest_csv,
    split_by_months,
    synthesize_icld_like,
    synthesize_series,
)


def write_csv(path, rows, header="datetime,value"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


class TestIngestCsv:
    def test_two_row_file(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2021-01-01 00:00:00,10.5",
            "2021-01-01 01:00:00,11.0",
        ])
        series = ingest_csv(p, "datetime", "value", Resolution.HOURLY)
        assert len(series) == 2
        assert series.values == (10.5, 11.0)
        assert series.resolution is Resolution.HOURLY
        assert series.name == "a"

    def test_rows_sorted_by_timestamp(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2021-01-02,2",
            "2021-01-01,1",
            "2021-01-03,3",
        ])
        series = ingest_csv(p, "datetime", "value", Resolution.DAILY)
        assert series.values == (1.0, 2.0, 3.0)

    def test_gap_names_missing_timestamp(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2021-01-01 00:00,1",
            "2021-01-01 02:00,3",
        ])
        with pytest.raises(GapError) as err:
            ingest_csv(p, "datetime", "value", Resolution.HOURLY)
        assert err.value.timestamp == datetime(2021, 1, 1, 1, tzinfo=timezone.utc)

    def test_forward_fill_carries_previous_value(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2021-01-01 00:00,1",
            "2021-01-01 03:00,4",
        ])
        series = ingest_csv(
            p, "datetime", "value", Resolution.HOURLY, forward_fill=True
        )
        assert series.values == (1.0, 1.0, 1.0, 4.0)

    def test_duplicate_timestamp_rejected(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2021-01-01,1",
            "2021-01-01,2",
        ])
        with pytest.raises(DuplicateTimestamp):
            ingest_csv(p, "datetime", "value", Resolution.DAILY)

    def test_bad_value_names_row(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2021-01-01,1",
            "2021-01-02,oops",
        ])
        with pytest.raises(ParseError) as err:
            ingest_csv(p, "datetime", "value", Resolution.DAILY)
        assert err.value.row == 3

    def test_off_grid_timestamp_names_row(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", [
            "2021-01-01 00:00,1",
            "2021-01-01 00:30,2",
        ])
        with pytest.raises(ParseError) as err:
            ingest_csv(p, "datetime", "value", Resolution.HOURLY)
        assert "off the hourly grid" in str(err.value)

    def test_missing_column_rejected(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["2021-01-01,1"], header="when,value")
        with pytest.raises(ParseError):
            ingest_csv(p, "datetime", "value", Resolution.DAILY)

    def test_column_names_are_configurable(self, tmp_path):
        p = write_csv(
            tmp_path / "a.csv",
            ["2021-01-01T00:00:00Z,5", "2021-01-01T01:00:00Z,6"],
            header="ts,load",
        )
        series = ingest_csv(p, "ts", "load", Resolution.HOURLY)
        assert series.values == (5.0, 6.0)


class TestSplitByMonths:
    def _series(self, n_days, start=datetime(2020, 1, 1, tzinfo=timezone.utc)):
        return synthesize_series(
            1, n_days, Resolution.DAILY, mean=100.0, std=20.0
        )

    def test_splits_are_contiguous_prefix(self):
        series = self._series(400)
        train, val, test = split_by_months(series, 6, 3, 3)
        joined = train.values + val.values + test.values
        assert joined == series.values[:len(joined)]
        assert train.start == series.start
        assert val.start == train.timestamp(len(train))

    def test_month_lengths_are_calendar_accurate(self):
        series = self._series(400)
        train, _, _ = split_by_months(series, 2, 1, 1)
        # Jan 2020 + Feb 2020 (leap year) = 31 + 29 days.
        assert len(train) == 60

    def test_names_carry_split_labels(self):
        train, val, test = split_by_months(self._series(400), 6, 3, 3)
        assert train.name.endswith("/train")
        assert val.name.endswith("/val")
        assert test.name.endswith("/test")

    def test_too_short_raises(self):
        with pytest.raises(SpanTooShort):
            split_by_months(self._series(90), 48, 12, 6)

    def test_non_positive_months_rejected(self):
        with pytest.raises(ValueError):
            split_by_months(self._series(400), 6, 0, 3)

    def test_day_31_start_clamps(self):
        from loadcast.core import LoadSeries

        series = LoadSeries(
            "clamp", Resolution.DAILY,
            datetime(2021, 1, 31, tzinfo=timezone.utc),
            tuple(float(i) for i in range(120)),
        )
        train, val, test = split_by_months(series, 1, 1, 1)
        # Jan 31 + 1 month clamps to Feb 28, so train covers 28 days.
        assert len(train) == 28
        assert val.start == datetime(2021, 2, 28, tzinfo=timezone.utc)


class TestSynthesize:
    def test_deterministic_per_seed(self):
        a = synthesize_series(9, 200, Resolution.DAILY, 100.0, 25.0)
        b = synthesize_series(9, 200, Resolution.DAILY, 100.0, 25.0)
        assert a.values == b.values

    def test_statistics_converge_over_seeds(self):
        target_mean, target_std = 3695.10, 2334.11
        for seed in range(10):
            series = synthesize_icld_like(seed, 365)
            values = np.asarray(series.values)
            assert abs(values.mean() - target_mean) / target_mean < 0.01
            assert abs(values.std() - target_std) / target_std < 0.01

    def test_values_non_negative(self):
        series = synthesize_icld_like(3, 500)
        assert min(series.values) >= 0.0

    def test_weekly_shape_present(self):
        # Weekend positions in the profile sit well below weekdays.
        series = synthesize_series(2, 700, Resolution.DAILY, 1000.0, 300.0)
        values = np.asarray(series.values)
        weekday = values[np.arange(700) % 7 < 5].mean()
        weekend = values[np.arange(700) % 7 >= 5].mean()
        assert weekend < weekday

    def test_hourly_resolution_supported(self):
        series = synthesize_series(4, 240, Resolution.HOURLY, 1184.82, 192.26)
        assert series.resolution is Resolution.HOURLY
        assert len(series) == 240

    def test_too_few_steps_rejected(self):
        with pytest.raises(ValueError):
            synthesize_series(0, 10, Resolution.DAILY, 100.0, 10.0)


class TestJsonl:
    def _records(self):
        series = synthesize_series(7, 90, Resolution.DAILY, 200.0, 40.0)
        window = WindowSpec(input_len=7, output_len=7, obs_len=14)
        cfg = RunConfig(
            window=window, format=PromptFormat.ETS,
            resolution=Resolution.DAILY, precision=1,
        )
        return [encode(inst, cfg) for inst in make_instances(series, window)[:3]]

    def test_round_trip(self, tmp_path):
        records = self._records()
        path = tmp_path / "prompts.jsonl"
        export_jsonl(records, path)
        assert len(path.read_text().strip().splitlines()) == 3
        assert import_jsonl(path) == records

    def test_malformed_line_names_line_number(self, tmp_path):
        records = self._records()
        path = tmp_path / "prompts.jsonl"
        export_jsonl(records, path)
        lines = path.read_text().splitlines()
        lines[1] = '{"format": "ets"}'
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError) as err:
            import_jsonl(path)
        assert err.value.line == 2

    def test_meta_defaults_applied(self, tmp_path):
        path = tmp_path / "prompts.jsonl"
        path.write_text(
            '{"format": "text", "input_text": "as follows, 1kWh. next?",'
            ' "target_text": "as follows, 2kWh.", "instance_ref": "r@1",'
            ' "expected_len": 1}\n'
        )
        record, = import_jsonl(path)
        assert record.unit_label == "kWh"
        assert record.step_label is Resolution.DAILY
