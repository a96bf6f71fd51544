"""Training loop, optimizer, and checkpoints for the toy transformer.

train() consumes the codec's PromptRecords directly: each record becomes
BOS input SEP target EOS with loss only on the target span. In adapter
mode the base model first gets a short full-parameter pass over synthetic
template text, is then frozen, and only the U/V pairs keep training.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..core import Resolution, RunConfig, WindowSpec, derive_rng, make_instances
from .model import (
    ContextOverflow,
    ToyLmConfig,
    add_lora_adapters,
    forward,
    init_params,
    loss_and_grads,
    trainable_keys,
)
from .tokenizer import EOS, encode_record


class Adam:
    """Standard Adam; steps only the keys it was given."""

    def __init__(self, keys, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.keys = list(keys)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1**self.t
        correction2 = 1.0 - b2**self.t
        for k in self.keys:
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(params[k]))
            v = self.v.setdefault(k, np.zeros_like(params[k]))
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            step = self.lr * (m / correction1) / (
                np.sqrt(v / correction2) + self.eps
            )
            params[k] = params[k] - step.astype(params[k].dtype)


def pad_batch(sequences, masks, pad_id: int = EOS):
    """Right-pad to the longest sequence; pads never enter the loss."""
    width = max(len(s) for s in sequences)
    ids = np.full((len(sequences), width), pad_id, dtype=int)
    mask = np.zeros((len(sequences), width), dtype=float)
    for i, (seq, m) in enumerate(zip(sequences, masks)):
        ids[i, : len(seq)] = seq
        mask[i, : len(m)] = m
    return ids, mask


def tokenize_records(records, cfg: ToyLmConfig):
    sequences, masks = [], []
    for record in records:
        ids, mask = encode_record(record.input_text, record.target_text)
        if len(ids) > cfg.context_len:
            raise ContextOverflow(
                f"record {record.instance_ref} needs {len(ids)} tokens, "
                f"context is {cfg.context_len}"
            )
        sequences.append(ids)
        masks.append(mask)
    return sequences, masks


def token_accuracy(params, cfg: ToyLmConfig, sequences, masks) -> float:
    """Fraction of scored positions whose argmax matches the next token."""
    ids, mask = pad_batch(sequences, masks)
    logits, _ = forward(params, cfg, ids)
    predictions = logits.argmax(axis=-1)
    scored = mask[:, :-1].astype(bool)
    hits = (predictions[:, :-1] == ids[:, 1:]) & scored
    return float(hits.sum() / scored.sum())


@dataclass
class TrainResult:
    params: dict
    cfg: ToyLmConfig
    steps: int
    final_loss: float
    accuracy: float
    history: list


def _template_pretrain_records(records, cfg: ToyLmConfig):
    """A few synthetic records in the same format, for base pre-training."""
    from ..codec import encode
    from ..data import synthesize_series

    sample = records[0]
    resolution = sample.step_label
    n = sample.expected_len
    window = WindowSpec(input_len=n, output_len=n, obs_len=2 * n)
    series = synthesize_series(
        cfg.seed + 1, max(60, 4 * n + 8), resolution,
        mean=3000.0, std=900.0, name="pretrain",
    )
    run = RunConfig(window=window, format=sample.format, resolution=resolution,
                    unit_label=sample.unit_label)
    instances = make_instances(series, window)[:16]
    return [encode(inst, run) for inst in instances]


def train(
    records,
    cfg: ToyLmConfig,
    *,
    max_steps: int = 2000,
    target_accuracy: float | None = None,
    eval_every: int = 50,
    lr: float | None = None,
    pretrain_steps: int = 60,
    params: dict | None = None,
) -> TrainResult:
    """Next-token training over the records; returns params and curve.

    Full mode trains everything. Adapter mode first runs pretrain_steps of
    full-parameter training on synthetic template text, then freezes the
    base and trains only the adapters. Stops early once target_accuracy
    is reached (checked every eval_every steps).
    """
    if not records:
        raise ValueError("train() needs a non-empty record list")
    lr = cfg.lr if lr is None else lr
    sequences, masks = tokenize_records(records, cfg)

    if params is None:
        params = init_params(cfg)
        if cfg.mode == "lora":
            base_cfg = cfg.with_mode("full")
            pre = _template_pretrain_records(records, cfg)
            if pretrain_steps > 0:
                result = train(
                    pre, base_cfg, max_steps=pretrain_steps,
                    eval_every=max(pretrain_steps, 1), lr=lr, params=params,
                )
                params = result.params
            add_lora_adapters(params, cfg)

    keys = trainable_keys(params, cfg)
    optimizer = Adam(keys, lr)
    order_rng = derive_rng(cfg.seed, "toylm-batches")
    history: list = []
    loss = float("nan")
    accuracy = 0.0
    step = 0
    order: list[int] = []

    while step < max_steps:
        if len(order) < cfg.batch_size:
            order.extend(order_rng.permutation(len(sequences)).tolist())
        take, order = order[: cfg.batch_size], order[cfg.batch_size:]
        ids, mask = pad_batch([sequences[i] for i in take], [masks[i] for i in take])
        dropout_rng = (
            derive_rng(cfg.seed, "toylm-dropout", step)
            if cfg.mode == "lora" and cfg.lora_dropout > 0 else None
        )
        loss, grads = loss_and_grads(params, cfg, ids, mask, dropout_rng)
        optimizer.step(params, grads)
        step += 1
        history.append({"step": step, "loss": loss})
        if target_accuracy is not None and step % eval_every == 0:
            accuracy = token_accuracy(params, cfg, sequences, masks)
            history[-1]["accuracy"] = accuracy
            if accuracy >= target_accuracy:
                break

    if step and (target_accuracy is None or "accuracy" not in history[-1]):
        accuracy = token_accuracy(params, cfg, sequences, masks)
    return TrainResult(
        params=params, cfg=cfg, steps=step, final_loss=loss,
        accuracy=accuracy, history=history,
    )


def save_checkpoint(path, params: dict, cfg: ToyLmConfig) -> None:
    arrays = dict(params)
    arrays["__config__"] = np.frombuffer(
        json.dumps(asdict(cfg)).encode("utf-8"), dtype=np.uint8
    )
    np.savez_compressed(path, **arrays)


def load_checkpoint(path):
    with np.load(path) as bundle:
        blob = bytes(bundle["__config__"].tobytes())
        cfg = ToyLmConfig(**json.loads(blob.decode("utf-8")))
        params = {k: bundle[k] for k in bundle.files if k != "__config__"}
    return params, cfg
