"""Hallucination rate, MAE, and RMSE over parsed forecasts.

The hallucination rate is the fraction of samples whose parse verdict is
not Clean. MAE and RMSE are computed per point: errors are flattened
across samples and horizon steps before averaging, and repaired values
(zero-filled or truncated) enter the errors like any others.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import Mapping, Sequence

from .core import LoadcastError
from .extract import ParseOutcome


class LengthMismatch(LoadcastError):
    """Outcome and target lists (or their horizons) disagree in length."""


@dataclass(frozen=True)
class MetricsSlice:
    """Metrics over one subset of samples (e.g. one prompt format)."""

    n_samples: int
    n_hallucinated: int
    hallucination_rate: float
    mae: float
    rmse: float

    def __post_init__(self) -> None:
        if not 0 <= self.n_hallucinated <= self.n_samples:
            raise ValueError("n_hallucinated must lie in [0, n_samples]")
        expected = self.n_hallucinated / self.n_samples if self.n_samples else 0.0
        if self.hallucination_rate != expected:
            raise ValueError("hallucination_rate must equal n_hallucinated / n_samples")
        if self.mae < 0 or self.rmse < 0:
            raise ValueError("error metrics must be non-negative")

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_hallucinated": self.n_hallucinated,
            "hallucination_rate": self.hallucination_rate,
            "mae": self.mae,
            "rmse": self.rmse,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsSlice":
        return cls(
            n_samples=int(d["n_samples"]),
            n_hallucinated=int(d["n_hallucinated"]),
            hallucination_rate=float(d["hallucination_rate"]),
            mae=float(d["mae"]),
            rmse=float(d["rmse"]),
        )


@dataclass(frozen=True)
class MetricsReport:
    n_samples: int
    n_hallucinated: int
    hallucination_rate: float
    mae: float
    rmse: float
    per_format_breakdown: Mapping[str, MetricsSlice]

    def __post_init__(self) -> None:
        MetricsSlice(
            self.n_samples, self.n_hallucinated, self.hallucination_rate,
            self.mae, self.rmse,
        )
        object.__setattr__(
            self, "per_format_breakdown",
            MappingProxyType(dict(sorted(self.per_format_breakdown.items()))),
        )

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_hallucinated": self.n_hallucinated,
            "hallucination_rate": self.hallucination_rate,
            "mae": self.mae,
            "rmse": self.rmse,
            "per_format_breakdown": {
                k: v.to_dict() for k, v in self.per_format_breakdown.items()
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        return cls(
            n_samples=int(d["n_samples"]),
            n_hallucinated=int(d["n_hallucinated"]),
            hallucination_rate=float(d["hallucination_rate"]),
            mae=float(d["mae"]),
            rmse=float(d["rmse"]),
            per_format_breakdown={
                k: MetricsSlice.from_dict(v)
                for k, v in d.get("per_format_breakdown", {}).items()
            },
        )


def _slice_over(outcomes: Sequence[ParseOutcome], targets) -> MetricsSlice:
    abs_errors: list[float] = []
    sq_errors: list[float] = []
    n_h = 0
    for outcome, target in zip(outcomes, targets):
        if not outcome.verdict.is_clean:
            n_h += 1
        for got, want in zip(outcome.repaired, target):
            e = abs(got - want)
            abs_errors.append(e)
            sq_errors.append(e * e)
    n = len(outcomes)
    n_points = len(abs_errors)
    return MetricsSlice(
        n_samples=n,
        n_hallucinated=n_h,
        hallucination_rate=n_h / n if n else 0.0,
        mae=math.fsum(abs_errors) / n_points if n_points else 0.0,
        rmse=math.sqrt(math.fsum(sq_errors) / n_points) if n_points else 0.0,
    )


def evaluate(
    outcomes: Sequence[ParseOutcome],
    targets: Sequence[Sequence[float]],
    formats: Sequence | None = None,
) -> MetricsReport:
    """Score parsed outcomes against ground-truth horizons.

    formats, when given, is a per-sample label sequence (anything with a
    .value attribute or a plain string) used to build the per-format
    breakdown; without it the breakdown is empty.
    """
    if len(outcomes) != len(targets):
        raise LengthMismatch(
            f"{len(outcomes)} outcomes vs {len(targets)} targets"
        )
    if formats is not None and len(formats) != len(outcomes):
        raise LengthMismatch(
            f"{len(formats)} format labels vs {len(outcomes)} outcomes"
        )
    for i, (outcome, target) in enumerate(zip(outcomes, targets)):
        if len(outcome.repaired) != len(target):
            raise LengthMismatch(
                f"sample {i}: repaired length {len(outcome.repaired)} "
                f"vs target length {len(target)}"
            )

    breakdown: dict[str, MetricsSlice] = {}
    if formats is not None:
        labels = [str(getattr(f, "value", f)) for f in formats]
        for label in sorted(set(labels)):
            idx = [i for i, lab in enumerate(labels) if lab == label]
            breakdown[label] = _slice_over(
                [outcomes[i] for i in idx], [targets[i] for i in idx]
            )

    overall = _slice_over(outcomes, targets)
    return MetricsReport(
        n_samples=overall.n_samples,
        n_hallucinated=overall.n_hallucinated,
        hallucination_rate=overall.hallucination_rate,
        mae=overall.mae,
        rmse=overall.rmse,
        per_format_breakdown=breakdown,
    )


class ReportStyle(str, Enum):
    JSON = "json"
    MARKDOWN = "markdown"
    CSV = "csv"


_HEADER = ("Method", "Hallucination Rate", "MAE", "RMSE")


def _fmt(x: float) -> str:
    return format(x, ".6g")


def _rows(report: MetricsReport) -> list[tuple[str, str, str, str]]:
    return [
        (name, _fmt(s.hallucination_rate), _fmt(s.mae), _fmt(s.rmse))
        for name, s in report.per_format_breakdown.items()
    ]


def _markdown_table(rows: list[tuple[str, str, str, str]]) -> str:
    lines = [
        "| " + " | ".join(_HEADER) + " |",
        "| " + " | ".join("---" for _ in _HEADER) + " |",
    ]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines) + "\n"


def _csv_table(rows: list[tuple[str, str, str, str]]) -> str:
    lines = ["method,hallucination_rate,mae,rmse"]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def render_report(report: MetricsReport, style: ReportStyle = ReportStyle.JSON) -> str:
    """Serialize one report; markdown/csv list the per-format rows."""
    style = ReportStyle(style)
    if style is ReportStyle.JSON:
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    rows = _rows(report)
    if style is ReportStyle.MARKDOWN:
        return _markdown_table(rows)
    return _csv_table(rows)


def render_comparison(
    named: Mapping[str, MetricsReport], style: ReportStyle = ReportStyle.MARKDOWN
) -> str:
    """One table over several runs, one row per run's overall metrics."""
    style = ReportStyle(style)
    rows = [
        (name, _fmt(r.hallucination_rate), _fmt(r.mae), _fmt(r.rmse))
        for name, r in named.items()
    ]
    if style is ReportStyle.JSON:
        return json.dumps(
            {name: r.to_dict() for name, r in named.items()},
            sort_keys=True, indent=2,
        ) + "\n"
    if style is ReportStyle.MARKDOWN:
        return _markdown_table(rows)
    return _csv_table(rows)


def parse_report(text: str) -> MetricsReport:
    """Inverse of render_report(style=Json)."""
    return MetricsReport.from_dict(json.loads(text))
