"""Domain types shared by every stage of the forecasting pipeline.

A load series is a gapless univariate sequence at daily or hourly
resolution. Sliding a window over it yields forecast instances: an input
window ``x``, a longer observation window ``x_obs`` ending at the same
step (used for max/min statistics), and the target window ``y``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum

import numpy as np


class LoadcastError(Exception):
    """Base class for all errors raised by this package."""


class SeriesTooShort(LoadcastError):
    """Series has fewer values than one window requires."""


class Resolution(str, Enum):
    DAILY = "daily"
    HOURLY = "hourly"

    @property
    def step(self) -> timedelta:
        return timedelta(days=1) if self is Resolution.DAILY else timedelta(hours=1)

    @property
    def step_word(self) -> str:
        """Unit of one step as prose: "day" or "hour"."""
        return "day" if self is Resolution.DAILY else "hour"

    @property
    def horizon_word(self) -> str:
        """Prose name of the forecast horizon: a week of days or a day of hours."""
        return "week" if self is Resolution.DAILY else "day"

    @property
    def adjective(self) -> str:
        return "daily" if self is Resolution.DAILY else "hourly"


class PromptFormat(str, Enum):
    TEXT = "text"  # plain comma-joined value list
    TS = "ts"      # value list plus a statistics sentence
    ETS = "ets"    # one clause per position plus the statistics sentence


@dataclass(frozen=True)
class LoadSeries:
    """Gapless univariate load sequence with implied timestamps.

    Timestamps are ``start + i * resolution.step``; gaps must be repaired
    or rejected at ingestion, so only ``start`` is stored.
    """

    name: str
    resolution: Resolution
    start: datetime
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("LoadSeries.values must be non-empty")
        if self.start.tzinfo is None:
            object.__setattr__(self, "start", self.start.replace(tzinfo=timezone.utc))
        vals = tuple(float(v) for v in self.values)
        for i, v in enumerate(vals):
            if not math.isfinite(v):
                raise ValueError(f"LoadSeries value at index {i} is not finite: {v!r}")
            if v < 0:
                raise ValueError(f"LoadSeries value at index {i} is negative: {v!r}")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def timestamp(self, index: int) -> datetime:
        return self.start + index * self.resolution.step

    def to_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window geometry: input, observation, and target lengths.

    The observation window extends the input window backwards; it must be
    at least as long as the input. Defaults follow the per-resolution
    conventions (7/7 daily, 24/24 hourly) with a 4x observation window.
    """

    input_len: int
    output_len: int
    obs_len: int
    stride: int = 1

    def __post_init__(self) -> None:
        for name in ("input_len", "output_len", "obs_len", "stride"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValueError(f"WindowSpec.{name} must be a positive integer, got {v!r}")
        if self.obs_len < self.input_len:
            raise ValueError("WindowSpec.obs_len must be >= input_len")

    @classmethod
    def for_resolution(cls, resolution: Resolution, stride: int = 1) -> "WindowSpec":
        n = 7 if resolution is Resolution.DAILY else 24
        return cls(input_len=n, output_len=n, obs_len=4 * n, stride=stride)


@dataclass(frozen=True)
class ForecastInstance:
    """One supervised example: input window, observation window, target."""

    series_id: str
    t0: datetime  # timestamp of the first target step
    x: tuple[float, ...]
    x_obs: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "x_obs", tuple(float(v) for v in self.x_obs))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if len(self.x_obs) < len(self.x):
            raise ValueError("x_obs must be at least as long as x")
        if self.x_obs[len(self.x_obs) - len(self.x):] != self.x:
            raise ValueError("x must equal the trailing input_len entries of x_obs")

    @property
    def ref(self) -> str:
        return f"{self.series_id}@{self.t0.isoformat()}"


@dataclass(frozen=True)
class StatSummary:
    """Max/min over the observation window, mean over the input window."""

    max_obs: float
    min_obs: float
    avg_in: float

    def __post_init__(self) -> None:
        if self.max_obs < self.min_obs:
            raise ValueError("StatSummary.max_obs must be >= min_obs")


@dataclass(frozen=True)
class RunConfig:
    """Immutable per-run settings; encode and parse must share them."""

    window: WindowSpec
    format: PromptFormat = PromptFormat.TEXT
    resolution: Resolution = Resolution.DAILY
    precision: int = 0
    seed: int = 0
    backend: str = "echo"
    batch_size: int = 32
    unit_label: str = "kWh"

    def __post_init__(self) -> None:
        if self.precision < 0:
            raise ValueError("RunConfig.precision must be >= 0")
        if self.batch_size <= 0:
            raise ValueError("RunConfig.batch_size must be positive")


def make_instances(series: LoadSeries, spec: WindowSpec) -> list[ForecastInstance]:
    """Slide a window of obs_len + output_len steps over the series.

    Produces ``floor((len - obs_len - output_len) / stride) + 1`` instances;
    raises SeriesTooShort when the series cannot hold a single window.
    """
    needed = spec.obs_len + spec.output_len
    n = len(series.values)
    if n < needed:
        raise SeriesTooShort(
            f"series {series.name!r} has {n} values; need at least {needed} "
            f"(obs_len {spec.obs_len} + output_len {spec.output_len})"
        )
    instances = []
    for offset in range(0, n - needed + 1, spec.stride):
        obs_start = offset
        obs_end = offset + spec.obs_len
        x_obs = series.values[obs_start:obs_end]
        x = x_obs[spec.obs_len - spec.input_len:]
        y = series.values[obs_end:obs_end + spec.output_len]
        instances.append(
            ForecastInstance(
                series_id=series.name,
                t0=series.timestamp(obs_end),
                x=x,
                x_obs=x_obs,
                y=y,
            )
        )
    return instances


def instance_count(n_values: int, spec: WindowSpec) -> int:
    """Closed-form count matching make_instances (0 when too short)."""
    usable = n_values - spec.obs_len - spec.output_len
    if usable < 0:
        return 0
    return usable // spec.stride + 1


def derive_rng(seed: int, *labels: str | int) -> np.random.Generator:
    """Deterministic sub-stream of the run seed, keyed by labels.

    Every random choice in the package draws from a generator obtained
    here, so one seed fixes the whole run.
    """
    material = repr((int(seed),) + labels).encode()
    digest = hashlib.sha256(material).digest()
    words = [int.from_bytes(digest[i:i + 8], "little") for i in range(0, 32, 8)]
    return np.random.default_rng(words)
