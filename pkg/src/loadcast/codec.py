"""Serialize forecast instances into natural-language prompts.

Three formats are produced, all single-line:

* ``text`` - "The electricity consumption of each day is as follows,
  v1,v2,...,vNkWh. What is the daily consumption of next week?"
* ``ts``   - the same value list followed by a statistics sentence
  (max/min over the observation window, mean over the input window).
* ``ets``  - one clause per position ("the electricity consumption of
  day one is v1, ...") plus the statistics sentence.

Targets mirror the value-carrying part of each format, so a parser that
knows the format can recover the numbers exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from statistics import fmean

from sklearn.base import BaseEstimator, TransformerMixin

from .core import (
    ForecastInstance,
    LoadcastError,
    PromptFormat,
    Resolution,
    RunConfig,
    StatSummary,
)


class NonFiniteValue(LoadcastError):
    """Rendering NaN or infinity was requested."""


class PositionOutOfRange(LoadcastError):
    """Position word requested outside the supported 1..100 range."""


@dataclass(frozen=True)
class PromptRecord:
    """One serialized (input, target) pair, the unit of model I/O."""

    format: PromptFormat
    input_text: str
    target_text: str
    instance_ref: str
    expected_len: int
    unit_label: str = "kWh"
    step_label: Resolution = Resolution.DAILY

    def __post_init__(self) -> None:
        if self.expected_len <= 0:
            raise ValueError("PromptRecord.expected_len must be positive")
        for name in ("input_text", "target_text"):
            if "\n" in getattr(self, name):
                raise ValueError(f"PromptRecord.{name} must be single-line")


def format_number(v: float, precision: int = 0) -> str:
    """Fixed-point rendering with round-half-away-from-zero ties.

    Goes through the shortest decimal repr of ``v`` so that e.g. 1184.825
    rounds to "1184.83" at two decimals, matching hand rounding of the
    printed value rather than of the binary float below it.
    """
    v = float(v)
    if v != v or v in (float("inf"), float("-inf")):
        raise NonFiniteValue(f"cannot render non-finite value {v!r}")
    if precision < 0:
        raise ValueError("precision must be >= 0")
    quantum = Decimal(1).scaleb(-precision)
    d = Decimal(repr(v)).quantize(quantum, rounding=ROUND_HALF_UP)
    if d == 0:
        d = abs(d)  # never print "-0"
    return f"{d:f}"


_ONES = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
    "sixteen", "seventeen", "eighteen", "nineteen",
]
_TENS = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"]


def number_to_position_word(i: int) -> str:
    """English cardinal word for 1..100 ("one", ..., "twenty-four", ..., "one hundred")."""
    if not 1 <= i <= 100:
        raise PositionOutOfRange(f"position {i} outside 1..100")
    if i == 100:
        return "one hundred"
    if i < 20:
        return _ONES[i]
    tens, ones = divmod(i, 10)
    if ones == 0:
        return _TENS[tens]
    return f"{_TENS[tens]}-{_ONES[ones]}"


POSITION_WORDS: dict[str, int] = {number_to_position_word(i): i for i in range(1, 101)}


def compute_stats(inst: ForecastInstance) -> StatSummary:
    """Max/min over the observation window, arithmetic mean over the input."""
    return StatSummary(
        max_obs=max(inst.x_obs),
        min_obs=min(inst.x_obs),
        avg_in=fmean(inst.x),
    )


def _value_list(values, precision: int) -> str:
    return ",".join(format_number(v, precision) for v in values)


def _body(values, resolution: Resolution, precision: int, unit: str) -> str:
    return (
        f"The electricity consumption of each {resolution.step_word} is as follows, "
        f"{_value_list(values, precision)}{unit}."
    )


def _question(resolution: Resolution) -> str:
    return f"What is the {resolution.adjective} consumption of next {resolution.horizon_word}?"


def _stats_sentence(stats: StatSummary, precision: int) -> str:
    return (
        f"The maximum value is {format_number(stats.max_obs, precision)}, "
        f"the minimum value is {format_number(stats.min_obs, precision)}, "
        f"the average value is {format_number(stats.avg_in, precision)}."
    )


def _clauses(values, resolution: Resolution, precision: int) -> str:
    parts = []
    n = len(values)
    for i, v in enumerate(values, start=1):
        article = "The" if i == 1 else "the"
        tail = "." if i == n else ","
        parts.append(
            f"{article} electricity consumption of {resolution.step_word} "
            f"{number_to_position_word(i)} is {format_number(v, precision)}{tail}"
        )
    return " ".join(parts)


def _record(inst: ForecastInstance, cfg: RunConfig, input_text: str, target_text: str) -> PromptRecord:
    return PromptRecord(
        format=cfg.format,
        input_text=input_text,
        target_text=target_text,
        instance_ref=inst.ref,
        expected_len=len(inst.y),
        unit_label=cfg.unit_label,
        step_label=cfg.resolution,
    )


def encode_text(inst: ForecastInstance, cfg: RunConfig) -> PromptRecord:
    """Plain comma-list format; target is the same template over y."""
    body = _body(inst.x, cfg.resolution, cfg.precision, cfg.unit_label)
    input_text = f"{body} {_question(cfg.resolution)}"
    target_text = _body(inst.y, cfg.resolution, cfg.precision, cfg.unit_label)
    return _record(inst, cfg, input_text, target_text)


def encode_ts(inst: ForecastInstance, cfg: RunConfig) -> PromptRecord:
    """Value list plus statistics sentence; target identical to encode_text's."""
    body = _body(inst.x, cfg.resolution, cfg.precision, cfg.unit_label)
    stats = _stats_sentence(compute_stats(inst), cfg.precision)
    input_text = f"{body} {stats} {_question(cfg.resolution)}"
    target_text = _body(inst.y, cfg.resolution, cfg.precision, cfg.unit_label)
    return _record(inst, cfg, input_text, target_text)


def encode_ets(inst: ForecastInstance, cfg: RunConfig) -> PromptRecord:
    """Per-position clauses plus statistics; target carries clauses only."""
    clauses = _clauses(inst.x, cfg.resolution, cfg.precision)
    stats = _stats_sentence(compute_stats(inst), cfg.precision)
    input_text = f"{clauses} {stats} {_question(cfg.resolution)}"
    target_text = _clauses(inst.y, cfg.resolution, cfg.precision)
    return _record(inst, cfg, input_text, target_text)


_ENCODERS = {
    PromptFormat.TEXT: encode_text,
    PromptFormat.TS: encode_ts,
    PromptFormat.ETS: encode_ets,
}


def encode(inst: ForecastInstance, cfg: RunConfig) -> PromptRecord:
    """Dispatch on cfg.format."""
    return _ENCODERS[cfg.format](inst, cfg)


class PromptEncoder(BaseEstimator, TransformerMixin):
    """Stateless transformer from ForecastInstance lists to PromptRecords.

    Exists so the codec can sit inside sklearn pipelines next to the
    forecaster estimators; fit is a no-op.
    """

    def __init__(self, format: str = "text", resolution: str = "daily",
                 precision: int = 0, unit_label: str = "kWh"):
        self.format = format
        self.resolution = resolution
        self.precision = precision
        self.unit_label = unit_label

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[PromptRecord]:
        cfg = self._config(X)
        return [encode(inst, cfg) for inst in X]

    def _config(self, instances) -> RunConfig:
        from .core import WindowSpec

        if instances:
            first = instances[0]
            window = WindowSpec(
                input_len=len(first.x), output_len=len(first.y),
                obs_len=len(first.x_obs),
            )
        else:
            window = WindowSpec.for_resolution(Resolution(self.resolution))
        return RunConfig(
            window=window,
            format=PromptFormat(self.format),
            resolution=Resolution(self.resolution),
            precision=self.precision,
            unit_label=self.unit_label,
        )
