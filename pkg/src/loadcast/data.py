"""Dataset plumbing: CSV ingestion, month splits, synthesis, JSONL files.

Ingestion is strict by default: unparseable rows, duplicate timestamps,
and gaps each raise a targeted error naming the offending row or
timestamp. Gaps can optionally be forward-filled, never silently.
"""

from __future__ import annotations

import calendar
import csv
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .codec import PromptRecord
from .core import (
    LoadcastError,
    LoadSeries,
    PromptFormat,
    Resolution,
    derive_rng,
)


class ParseError(LoadcastError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class DuplicateTimestamp(LoadcastError):
    def __init__(self, timestamp: datetime):
        super().__init__(f"duplicate timestamp {timestamp.isoformat()}")
        self.timestamp = timestamp


class GapError(LoadcastError):
    def __init__(self, timestamp: datetime):
        super().__init__(f"missing step at {timestamp.isoformat()}")
        self.timestamp = timestamp


class SpanTooShort(LoadcastError):
    """Series does not cover the requested number of months."""


class SchemaError(LoadcastError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


_TIMESTAMP_FORMATS = (
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%d",
    "%d-%m-%Y %H:%M",
    "%m/%d/%Y %H:%M",
)


def _parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    try:
        return datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        pass
    for fmt in _TIMESTAMP_FORMATS:
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise ValueError(f"unrecognized timestamp {raw!r}")


def ingest_csv(
    path,
    timestamp_col: str,
    value_col: str,
    resolution: Resolution,
    *,
    series_name: str | None = None,
    forward_fill: bool = False,
) -> LoadSeries:
    """Read one (timestamp, value) series from a CSV file.

    Rows are sorted by timestamp; duplicates raise, and any gap in the
    regular grid raises GapError unless forward_fill carries the previous
    value across it. Row numbers in errors count the header as row 1.
    """
    path = Path(path)
    rows: list[tuple[datetime, float, int]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(1, "empty file")
        for col in (timestamp_col, value_col):
            if col not in reader.fieldnames:
                raise ParseError(1, f"missing column {col!r}")
        for i, row in enumerate(reader, start=2):
            try:
                ts = _parse_timestamp(row[timestamp_col])
                value = float(row[value_col])
            except (ValueError, TypeError) as exc:
                raise ParseError(i, str(exc)) from exc
            if ts.tzinfo is None:
                ts = ts.replace(tzinfo=timezone.utc)
            rows.append((ts, value, i))

    if not rows:
        raise ParseError(2, "no data rows")
    rows.sort(key=lambda r: r[0])

    step = resolution.step
    values = [rows[0][1]]
    previous = rows[0][0]
    for ts, value, i in rows[1:]:
        if ts == previous:
            raise DuplicateTimestamp(ts)
        if (ts - previous) % step:
            raise ParseError(
                i, f"timestamp {ts.isoformat()} is off the {resolution.value} grid"
            )
        while ts - previous > step:
            previous += step
            if not forward_fill:
                raise GapError(previous)
            values.append(values[-1])
        values.append(value)
        previous = ts

    return LoadSeries(
        name=series_name or path.stem,
        resolution=resolution,
        start=rows[0][0],
        values=tuple(values),
    )


def _add_months(dt: datetime, months: int) -> datetime:
    """Calendar-month shift, day clamped to the target month's last day."""
    index = dt.year * 12 + (dt.month - 1) + months
    year, month = divmod(index, 12)
    day = min(dt.day, calendar.monthrange(year, month + 1)[1])
    return dt.replace(year=year, month=month + 1, day=day)


def _index_at(series: LoadSeries, moment: datetime) -> int:
    return int((moment - series.start) // series.resolution.step)


def split_by_months(
    series: LoadSeries, train_months: int, val_months: int, test_months: int
) -> tuple[LoadSeries, LoadSeries, LoadSeries]:
    """Contiguous calendar-month train/val/test split from the series start.

    Windows built per split can never straddle a boundary because each
    split is returned as its own series.
    """
    for label, months in (
        ("train", train_months), ("val", val_months), ("test", test_months)
    ):
        if months <= 0:
            raise ValueError(f"{label}_months must be positive")

    bounds = [
        _add_months(series.start, train_months),
        _add_months(series.start, train_months + val_months),
        _add_months(series.start, train_months + val_months + test_months),
    ]
    indices = [_index_at(series, b) for b in bounds]
    if indices[-1] > len(series):
        raise SpanTooShort(
            f"series {series.name!r} ends {series.timestamp(len(series) - 1).isoformat()}, "
            f"before the requested {train_months}+{val_months}+{test_months} months"
        )

    pieces = []
    lo = 0
    for label, hi in zip(("train", "val", "test"), indices):
        pieces.append(
            LoadSeries(
                name=f"{series.name}/{label}",
                resolution=series.resolution,
                start=series.timestamp(lo),
                values=series.values[lo:hi],
            )
        )
        lo = hi
    return tuple(pieces)


_WEEKDAY_PROFILE = np.array([1.12, 1.18, 1.15, 1.10, 1.05, 0.62, 0.48])
_HOURLY_PROFILE = 0.55 + 0.45 * np.sin(np.linspace(0, 2 * np.pi, 24, endpoint=False) - 2.0) ** 2


def synthesize_series(
    seed: int,
    n_steps: int,
    resolution: Resolution,
    mean: float,
    std: float,
    *,
    name: str = "synthetic",
) -> LoadSeries:
    """Seasonal-profile series rescaled to the target mean and std.

    Shape = seasonal profile x mild trend x lognormal noise, then an
    affine rescale towards the targets with non-negativity clamping,
    iterated until the sample statistics land within tolerance.
    """
    if n_steps < 60:
        raise ValueError("n_steps must be >= 60 for stable statistics")
    rng = derive_rng(seed, "synthesize", resolution.value, n_steps)
    t = np.arange(n_steps)
    if resolution is Resolution.DAILY:
        seasonal = _WEEKDAY_PROFILE[t % 7]
    else:
        seasonal = _HOURLY_PROFILE[t % 24] * _WEEKDAY_PROFILE[(t // 24) % 7]
    trend = 1.0 + 0.2 * t / n_steps
    noise = rng.lognormal(mean=0.0, sigma=0.35, size=n_steps)
    shape = seasonal * trend * noise

    values = shape
    for _ in range(200):
        centered = (values - values.mean()) / values.std()
        values = np.maximum(mean + std * centered, 0.0)
        mean_off = abs(values.mean() - mean) / mean
        std_off = abs(values.std() - std) / std
        if mean_off < 0.005 and std_off < 0.005:
            break
    else:
        raise ValueError(
            f"synthesis did not reach mean {mean}/std {std} within tolerance"
        )

    return LoadSeries(
        name=name,
        resolution=resolution,
        start=datetime(2020, 1, 1, tzinfo=timezone.utc),
        values=tuple(float(v) for v in values),
    )


def synthesize_icld_like(
    seed: int, n_days: int, mean: float = 3695.10, std: float = 2334.11
) -> LoadSeries:
    """Daily series with industrial-client-like statistics."""
    return synthesize_series(
        seed, n_days, Resolution.DAILY, mean, std, name="icld-like"
    )


def export_jsonl(records: list[PromptRecord], path) -> None:
    """One JSON object per line; import_jsonl is the exact inverse."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(
                {
                    "format": record.format.value,
                    "input_text": record.input_text,
                    "target_text": record.target_text,
                    "instance_ref": record.instance_ref,
                    "expected_len": record.expected_len,
                    "meta": {
                        "unit_label": record.unit_label,
                        "step_label": record.step_label.value,
                    },
                },
                ensure_ascii=False, sort_keys=True,
            ))
            fh.write("\n")


def import_jsonl(path) -> list[PromptRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                meta = d.get("meta", {})
                records.append(PromptRecord(
                    format=PromptFormat(d["format"]),
                    input_text=d["input_text"],
                    target_text=d["target_text"],
                    instance_ref=d["instance_ref"],
                    expected_len=int(d["expected_len"]),
                    unit_label=meta.get("unit_label", "kWh"),
                    step_label=Resolution(meta.get("step_label", "daily")),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(i, str(exc)) from exc
    return records
