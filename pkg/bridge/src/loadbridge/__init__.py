"""Serve local language models behind the completions HTTP contract."""

from .finetune import (
    DatasetError,
    Record,
    TuningConfig,
    TuningResult,
    finetune,
    read_dataset,
)
from .lora import (
    LoraAdapter,
    adapter_state_dict,
    load_adapter,
    trainable_fraction,
    wrap_lora,
)
from .registry import (
    ADAPTER_CONFIG,
    ADAPTER_WEIGHTS,
    BridgeError,
    Completion,
    LoadedModel,
    ModelNotAvailable,
    ModelRegistry,
    PromptTooLong,
)
from .server import CompletionRequest, CompletionResponse, create_app

__version__ = "0.1.0"

__all__ = [
    "ADAPTER_CONFIG",
    "ADAPTER_WEIGHTS",
    "BridgeError",
    "Completion",
    "CompletionRequest",
    "CompletionResponse",
    "DatasetError",
    "LoadedModel",
    "LoraAdapter",
    "ModelNotAvailable",
    "ModelRegistry",
    "PromptTooLong",
    "Record",
    "TuningConfig",
    "TuningResult",
    "adapter_state_dict",
    "create_app",
    "finetune",
    "load_adapter",
    "read_dataset",
    "trainable_fraction",
    "wrap_lora",
]
