"""Model resolution and text completion.

Model ids are HuggingFace-style access keys ("openai-community/gpt2").
An id resolves, in order, to a subdirectory of BRIDGE_MODEL_DIR named
after it (an adapter directory when it holds adapter_config.json, a
plain pretrained checkpoint otherwise) or to the hub itself, which
honours HF_HUB_OFFLINE. Loaded models are cached per id; adapter bases
are always loaded fresh because wrapping mutates the module tree.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch
from transformers import (
    AutoConfig,
    AutoModelForCausalLM,
    AutoModelForSeq2SeqLM,
    AutoTokenizer,
)
from transformers.utils import logging as hf_logging

from .lora import load_adapter, wrap_lora

log = logging.getLogger(__name__)

hf_logging.disable_progress_bar()

ADAPTER_CONFIG = "adapter_config.json"
ADAPTER_WEIGHTS = "adapter_model.pt"

# from_pretrained materialises weights through process-global hooks, so
# two constructions racing on different threads corrupt each other (tied
# weights come back untied, parameters stay on the meta device). One
# model may be built at a time, no matter which registry asked.
_CONSTRUCTION_LOCK = threading.Lock()


class BridgeError(Exception):
    """Base class for everything this package raises on purpose."""


class ModelNotAvailable(BridgeError):
    """The requested model id cannot be resolved to loadable weights."""


class PromptTooLong(BridgeError):
    """The prompt alone does not fit the model context."""


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int
    completion_tokens: int


@dataclass
class LoadedModel:
    """A ready-to-generate model plus its tokenizer.

    Generation holds no module state (eval mode, no grad), so concurrent
    complete() calls on one instance are safe; the server's slot pool is
    the only throttle.
    """

    model_id: str
    model: Any
    tokenizer: Any
    is_encoder_decoder: bool
    adapter: str | None = None

    @property
    def context_len(self) -> int | None:
        return getattr(self.model.config, "max_position_embeddings", None)

    def complete(self, prompt: str, *, max_tokens: int, temperature: float) -> Completion:
        """Greedy continuation at temperature 0, sampled otherwise."""
        encoded = self.tokenizer(prompt, return_tensors="pt")
        n_prompt = int(encoded["input_ids"].shape[1])
        budget = max_tokens
        if not self.is_encoder_decoder and self.context_len is not None:
            if n_prompt >= self.context_len:
                raise PromptTooLong(
                    f"prompt is {n_prompt} tokens, context is {self.context_len}"
                )
            budget = min(budget, self.context_len - n_prompt)
        if budget <= 0:
            return Completion("", n_prompt, 0)
        kwargs: dict[str, Any] = {
            "max_new_tokens": budget,
            "do_sample": temperature > 0.0,
            "pad_token_id": self.tokenizer.pad_token_id
            if self.tokenizer.pad_token_id is not None
            else self.tokenizer.eos_token_id,
        }
        if temperature > 0.0:
            kwargs["temperature"] = temperature
        with torch.no_grad():
            out = self.model.generate(**encoded, **kwargs)
        generated = out[0] if self.is_encoder_decoder else out[0][n_prompt:]
        text = self.tokenizer.decode(generated, skip_special_tokens=True)
        return Completion(text, n_prompt, int(generated.shape[-1]))


class ModelRegistry:
    """Loads and caches models addressed by access key."""

    def __init__(self, model_dir: str | Path | None = None):
        root = model_dir if model_dir is not None else os.environ.get("BRIDGE_MODEL_DIR", "")
        self.model_dir = Path(root) if root else None
        self._cache: dict[str, LoadedModel] = {}
        self._gates: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()

    def loaded_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._cache)

    def resolve(self, model_id: str, *, fresh: bool = False) -> LoadedModel:
        """Return a loaded model, reusing the cache unless fresh is set."""
        if not model_id:
            raise ModelNotAvailable("empty model id")
        if fresh:
            return self._load(model_id)
        with self._lock:
            hit = self._cache.get(model_id)
            if hit is not None:
                return hit
            gate = self._gates.setdefault(model_id, threading.Lock())
        # Single-flight per id: concurrent requests for a cold model wait
        # for one load instead of each paying for their own.
        with gate:
            with self._lock:
                hit = self._cache.get(model_id)
            if hit is not None:
                return hit
            loaded = self._load(model_id)
            with self._lock:
                self._cache[model_id] = loaded
        return loaded

    def _local_path(self, model_id: str) -> Path | None:
        if self.model_dir is None:
            return None
        root = self.model_dir.resolve()
        candidate = (root / model_id).resolve()
        if candidate != root and root not in candidate.parents:
            raise ModelNotAvailable(f"model id {model_id!r} escapes the model directory")
        return candidate if candidate.is_dir() else None

    def _load(self, model_id: str) -> LoadedModel:
        path = self._local_path(model_id)
        try:
            if path is not None and (path / ADAPTER_CONFIG).is_file():
                loaded = self._load_adapter(model_id, path)
            else:
                source = str(path) if path is not None else model_id
                loaded = self._load_pretrained(model_id, source)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ModelNotAvailable(f"cannot load {model_id!r}: {exc}") from exc
        log.info("loaded %s (%s)", model_id, "adapter" if loaded.adapter else "base")
        return loaded

    def _load_pretrained(self, model_id: str, source: str) -> LoadedModel:
        config = AutoConfig.from_pretrained(source)
        cls = AutoModelForSeq2SeqLM if config.is_encoder_decoder else AutoModelForCausalLM
        with _CONSTRUCTION_LOCK:
            model = cls.from_pretrained(source)
        model.eval()
        tokenizer = AutoTokenizer.from_pretrained(source)
        return LoadedModel(model_id, model, tokenizer, bool(config.is_encoder_decoder))

    def _load_adapter(self, model_id: str, path: Path) -> LoadedModel:
        spec = json.loads((path / ADAPTER_CONFIG).read_text(encoding="utf-8"))
        base = self.resolve(spec["base_model"], fresh=True)
        wrap_lora(
            base.model,
            rank=int(spec["rank"]),
            alpha=float(spec["alpha"]),
            dropout=float(spec["dropout"]),
        )
        state = torch.load(path / ADAPTER_WEIGHTS, map_location="cpu", weights_only=True)
        load_adapter(base.model, state)
        base.model.eval()
        return LoadedModel(
            model_id, base.model, base.tokenizer, base.is_encoder_decoder, adapter=str(path)
        )
