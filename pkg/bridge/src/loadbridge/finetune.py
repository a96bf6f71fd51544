"""Adapter fine-tuning on JSONL prompt datasets.

Datasets are the forecasting toolkit's export format: one JSON object
per line with format, input_text, target_text, expected_len and meta.
Training teaches the model to continue the prompt with the target text;
loss is taken over target tokens only. Defaults follow the adapter
recipe: rank 8, alpha 32, dropout 0.1, lr 5e-5, batch size 32.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .lora import adapter_state_dict, trainable_fraction, wrap_lora
from .registry import (
    ADAPTER_CONFIG,
    ADAPTER_WEIGHTS,
    BridgeError,
    LoadedModel,
    ModelRegistry,
)

log = logging.getLogger(__name__)

REQUIRED_FIELDS = ("format", "input_text", "target_text", "expected_len")


class DatasetError(BridgeError):
    """The dataset file cannot be used; the message lists every bad line."""


@dataclass(frozen=True)
class Record:
    prompt: str
    target: str


@dataclass(frozen=True)
class TuningConfig:
    rank: int = 8
    alpha: float = 32.0
    dropout: float = 0.1
    lr: float = 5e-5
    batch_size: int = 32
    epochs: int = 1
    seed: int = 0


@dataclass
class TuningResult:
    adapter_dir: Path
    steps: int
    final_loss: float
    trainable_fraction: float
    wrapped: list[str]
    history: list[dict] = field(default_factory=list)


def read_dataset(path: str | Path) -> list[Record]:
    """Parse a JSONL prompt dataset, reporting every bad line at once."""
    problems: list[str] = []
    records: list[Record] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                problems.append(f"line {lineno}: not JSON ({exc.msg})")
                continue
            if not isinstance(row, dict):
                problems.append(f"line {lineno}: not an object")
                continue
            missing = [name for name in REQUIRED_FIELDS if name not in row]
            if missing:
                problems.append(f"line {lineno}: missing {', '.join(missing)}")
                continue
            prompt, target = row["input_text"], row["target_text"]
            if not (isinstance(prompt, str) and prompt and isinstance(target, str) and target):
                problems.append(f"line {lineno}: input_text/target_text must be non-empty strings")
                continue
            records.append(Record(prompt, target))
    if problems:
        raise DatasetError(f"{path}: " + "; ".join(problems))
    if not records:
        raise DatasetError(f"{path} holds no records")
    return records


def _encode(loaded: LoadedModel, record: Record) -> tuple[list[int], list[int]]:
    """Token ids and labels for one record; prompt tokens carry no loss."""
    tokenizer = loaded.tokenizer
    prompt_ids = tokenizer(record.prompt)["input_ids"]
    target_ids = tokenizer(" " + record.target)["input_ids"]
    eos = tokenizer.eos_token_id
    ids = prompt_ids + target_ids + ([eos] if eos is not None else [])
    labels = [-100] * len(prompt_ids) + ids[len(prompt_ids) :]
    return ids, labels


def _collate(
    batch: list[tuple[list[int], list[int]]], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    width = max(len(ids) for ids, _ in batch)
    ids = torch.full((len(batch), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(batch), width), dtype=torch.long)
    labels = torch.full((len(batch), width), -100, dtype=torch.long)
    for i, (row_ids, row_labels) in enumerate(batch):
        ids[i, : len(row_ids)] = torch.tensor(row_ids, dtype=torch.long)
        mask[i, : len(row_ids)] = 1
        labels[i, : len(row_labels)] = torch.tensor(row_labels, dtype=torch.long)
    return ids, mask, labels


def finetune(
    dataset_path: str | Path,
    model_id: str,
    out_dir: str | Path,
    config: TuningConfig = TuningConfig(),
    *,
    registry: ModelRegistry | None = None,
) -> TuningResult:
    """Train low-rank adapters on a prompt dataset and save them.

    The saved directory (adapter_config.json + weights) is itself a
    servable model id once placed under the model directory.
    """
    records = read_dataset(dataset_path)
    registry = registry or ModelRegistry()
    loaded = registry.resolve(model_id, fresh=True)

    wrapped = wrap_lora(
        loaded.model, rank=config.rank, alpha=config.alpha, dropout=config.dropout
    )
    encoded = [_encode(loaded, record) for record in records]
    context = loaded.context_len
    if context is not None:
        for i, (ids, _) in enumerate(encoded):
            if len(ids) > context:
                raise DatasetError(
                    f"record {i + 1} spans {len(ids)} tokens, model context is {context}"
                )
    pad_id = loaded.tokenizer.pad_token_id
    if pad_id is None:
        pad_id = loaded.tokenizer.eos_token_id or 0

    params = [p for p in loaded.model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(params, lr=config.lr)
    generator = torch.Generator().manual_seed(config.seed)

    loaded.model.train()
    history: list[dict] = []
    step = 0
    loss_value = float("nan")
    for _ in range(config.epochs):
        order = torch.randperm(len(encoded), generator=generator).tolist()
        for start in range(0, len(order), config.batch_size):
            batch = [encoded[i] for i in order[start : start + config.batch_size]]
            ids, mask, labels = _collate(batch, pad_id)
            out = loaded.model(input_ids=ids, attention_mask=mask, labels=labels)
            optimizer.zero_grad()
            out.loss.backward()
            optimizer.step()
            step += 1
            loss_value = float(out.loss.detach())
            history.append({"step": step, "loss": loss_value})
    loaded.model.eval()
    log.info("fine-tuned %s: %d steps, final loss %.4f", model_id, step, loss_value)

    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state_dict(loaded.model), out_path / ADAPTER_WEIGHTS)
    spec = {
        "version": 1,
        "base_model": model_id,
        "rank": config.rank,
        "alpha": config.alpha,
        "dropout": config.dropout,
        "wrapped": wrapped,
    }
    (out_path / ADAPTER_CONFIG).write_text(
        json.dumps(spec, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return TuningResult(
        adapter_dir=out_path,
        steps=step,
        final_loss=loss_value,
        trainable_fraction=trainable_fraction(loaded.model),
        wrapped=wrapped,
        history=history,
    )
