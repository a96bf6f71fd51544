"""Shared fixtures: canonical template-example instance and a memorized toy model.

The memorized model takes ~1 minute to train, so it is session-scoped and
shared between the transformer tests and the acceptance suite.
"""

from datetime import datetime, timezone

import pytest

from loadcast.codec import encode
from loadcast.core import (
    ForecastInstance,
    PromptFormat,
    Resolution,
    RunConfig,
    WindowSpec,
    make_instances,
)
from loadcast.data import synthesize_series

# The worked example week: seven daily inputs, the observed extremes that
# frame them, and the following week as ground truth.
EXAMPLE_X = (29979, 29415, 27958, 25579, 28112, 29664, 29516)
EXAMPLE_Y = (22992, 21895, 26303, 28286, 28727, 26488, 24839)
EXAMPLE_MAX = 32123
EXAMPLE_MIN = 20321

EXAMPLE_TEXT_INPUT = (
    "The electricity consumption of each day is as follows, "
    "29979,29415,27958,25579,28112,29664,29516kWh. "
    "What is the daily consumption of next week?"
)
EXAMPLE_TEXT_TARGET = (
    "The electricity consumption of each day is as follows, "
    "22992,21895,26303,28286,28727,26488,24839kWh."
)
EXAMPLE_STATS = (
    "The maximum value is 32123, the minimum value is 20321, "
    "the average value is 28603."
)
EXAMPLE_ETS_TARGET = (
    "The electricity consumption of day one is 22992, "
    "the electricity consumption of day two is 21895, "
    "the electricity consumption of day three is 26303, "
    "the electricity consumption of day four is 28286, "
    "the electricity consumption of day five is 28727, "
    "the electricity consumption of day six is 26488, "
    "the electricity consumption of day seven is 24839."
)


@pytest.fixture(scope="session")
def example_instance() -> ForecastInstance:
    return ForecastInstance(
        series_id="example",
        t0=datetime(2021, 1, 8, tzinfo=timezone.utc),
        x=EXAMPLE_X,
        x_obs=(EXAMPLE_MAX, EXAMPLE_MIN) + EXAMPLE_X,
        y=EXAMPLE_Y,
    )


def example_config(fmt: PromptFormat) -> RunConfig:
    return RunConfig(
        window=WindowSpec(input_len=7, output_len=7, obs_len=9),
        format=fmt,
        resolution=Resolution.DAILY,
    )


@pytest.fixture(scope="session")
def memo_records():
    """32 short plain-format records, small enough to memorize quickly."""
    series = synthesize_series(
        5, 120, Resolution.DAILY, mean=3000.0, std=800.0, name="memo"
    )
    window = WindowSpec(input_len=2, output_len=2, obs_len=2)
    cfg = RunConfig(window=window, format=PromptFormat.TEXT,
                    resolution=Resolution.DAILY)
    return [encode(inst, cfg) for inst in make_instances(series, window)[:32]]


@pytest.fixture(scope="session")
def memorized_model(memo_records):
    """Toy transformer trained to >=99% token accuracy on memo_records."""
    import time

    from loadcast.toylm import ToyLmConfig, train

    cfg = ToyLmConfig(
        d_model=32, n_heads=2, n_layers=2, context_len=192,
        mode="full", seed=0, batch_size=32,
    )
    started = time.monotonic()
    result = train(
        memo_records, cfg, max_steps=2000,
        target_accuracy=0.99, eval_every=25, lr=3e-3,
    )
    result.train_seconds = time.monotonic() - started
    assert result.accuracy >= 0.99, (
        f"memorization fixture failed: accuracy {result.accuracy:.4f} "
        f"after {result.steps} steps"
    )
    return result
