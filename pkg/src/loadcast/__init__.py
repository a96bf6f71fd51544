"""Prompt-serialized load forecasting with hallucination-aware scoring.

The pipeline turns sliding windows of a load series into natural-language
prompts (three formats of increasing verbosity), runs them through a
text-generation backend, parses the replies back into numbers with a
total, repair-capable extractor, and scores hallucination rate, MAE, and
RMSE. Numeric baselines (persistence, seasonal-naive, DLinear) and a
desk-scale byte-level transformer with optional low-rank adapters and
template-constrained decoding round out the comparisons.
"""

from .core import (
    ForecastInstance,
    LoadcastError,
    LoadSeries,
    PromptFormat,
    Resolution,
    RunConfig,
    SeriesTooShort,
    StatSummary,
    WindowSpec,
    derive_rng,
    instance_count,
    make_instances,
)
from .codec import (
    PromptEncoder,
    PromptRecord,
    compute_stats,
    encode,
    encode_ets,
    encode_text,
    encode_ts,
    format_number,
    number_to_position_word,
)
from .extract import (
    AddValue,
    DropValue,
    Garble,
    ParseOutcome,
    Verdict,
    VerdictKind,
    inject_fault,
    parse_prediction,
    tail_pad_repair,
)
from .metrics import (
    MetricsReport,
    MetricsSlice,
    ReportStyle,
    evaluate,
    parse_report,
    render_comparison,
    render_report,
)
from .data import (
    export_jsonl,
    import_jsonl,
    ingest_csv,
    split_by_months,
    synthesize_icld_like,
    synthesize_series,
)
from .baselines import (
    DLinearForecaster,
    PersistenceForecaster,
    SeasonalNaiveForecaster,
    moving_average,
    predict_persistence,
    predict_seasonal_naive,
)
from .backends import (
    EchoOracle,
    FaultInjector,
    GenerationRequest,
    RemoteBackend,
    ToyLmBackend,
)
from .harness import RunManifest, run_eval, run_generation, score_completions

__all__ = [
    "ForecastInstance", "LoadcastError", "LoadSeries", "PromptFormat",
    "Resolution", "RunConfig", "SeriesTooShort", "StatSummary", "WindowSpec",
    "derive_rng", "instance_count", "make_instances",
    "PromptEncoder", "PromptRecord", "compute_stats", "encode", "encode_ets",
    "encode_text", "encode_ts", "format_number", "number_to_position_word",
    "AddValue", "DropValue", "Garble", "ParseOutcome", "Verdict",
    "VerdictKind", "inject_fault", "parse_prediction", "tail_pad_repair",
    "MetricsReport", "MetricsSlice", "ReportStyle", "evaluate", "parse_report",
    "render_comparison", "render_report",
    "export_jsonl", "import_jsonl", "ingest_csv", "split_by_months",
    "synthesize_icld_like", "synthesize_series",
    "DLinearForecaster", "PersistenceForecaster", "SeasonalNaiveForecaster",
    "moving_average", "predict_persistence", "predict_seasonal_naive",
    "EchoOracle", "FaultInjector", "GenerationRequest", "RemoteBackend",
    "ToyLmBackend",
    "RunManifest", "run_eval", "run_generation", "score_completions",
]
