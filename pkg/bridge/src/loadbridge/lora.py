"""Low-rank adapters for frozen pre-trained weights.

Every attention and feed-forward projection gets an additive delta
y = base(x) + dropout(x) @ U @ V * (alpha / rank). U starts gaussian and
V at zero, so a freshly wrapped model behaves exactly like its base.
Only U and V train; everything else is frozen at wrap time.
"""

from __future__ import annotations

import torch
from torch import nn
from transformers.pytorch_utils import Conv1D


class LoraAdapter(nn.Module):
    """One wrapped projection: frozen base plus trainable U @ V delta."""

    def __init__(
        self,
        base: nn.Module,
        d_in: int,
        d_out: int,
        *,
        rank: int,
        alpha: float,
        dropout: float,
    ):
        super().__init__()
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        self.base = base
        self.rank = rank
        self.alpha = alpha
        self.scale = alpha / rank
        self.dropout = nn.Dropout(dropout)
        self.lora_u = nn.Parameter(torch.empty(d_in, rank))
        self.lora_v = nn.Parameter(torch.zeros(rank, d_out))
        nn.init.normal_(self.lora_u, std=0.02)
        for p in self.base.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.dropout(x) @ self.lora_u @ self.lora_v * self.scale


def _projection_dims(module: nn.Module) -> tuple[int, int]:
    if isinstance(module, Conv1D):
        return int(module.weight.shape[0]), int(module.nf)
    if isinstance(module, nn.Linear):
        return module.in_features, module.out_features
    raise TypeError(f"cannot adapt a {type(module).__name__}")


def _is_target(name: str) -> bool:
    # attention and feed-forward projections, by their block's name;
    # heads and embeddings stay untouched
    parts = name.split(".")
    return any(p in ("attn", "mlp") or p.endswith("_attn") for p in parts)


def wrap_lora(
    model: nn.Module, *, rank: int = 8, alpha: float = 32.0, dropout: float = 0.1
) -> list[str]:
    """Swap every targeted projection for an adapted copy, in place.

    Freezes the whole base model and returns the qualified names of the
    wrapped modules. Wrapping an already-wrapped model is refused.
    """
    if any(isinstance(m, LoraAdapter) for m in model.modules()):
        raise ValueError("model already carries adapters")
    targets = [
        name
        for name, module in model.named_modules()
        if isinstance(module, (Conv1D, nn.Linear)) and _is_target(name)
    ]
    if not targets:
        raise ValueError("no attention or feed-forward projections to adapt")
    for p in model.parameters():
        p.requires_grad_(False)
    for name in targets:
        module = model.get_submodule(name)
        parent_name, _, attr = name.rpartition(".")
        parent = model.get_submodule(parent_name) if parent_name else model
        d_in, d_out = _projection_dims(module)
        adapter = LoraAdapter(module, d_in, d_out, rank=rank, alpha=alpha, dropout=dropout)
        # a fresh module defaults to train mode; inherit the host's mode
        # so wrapping an eval model does not silently enable dropout
        adapter.train(module.training)
        setattr(parent, attr, adapter)
    return targets


def adapter_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    """Only the U/V tensors, detached on cpu."""
    return {
        key: value.detach().cpu().clone()
        for key, value in model.state_dict().items()
        if key.endswith((".lora_u", ".lora_v"))
    }


def load_adapter(model: nn.Module, state: dict[str, torch.Tensor]) -> None:
    """Load U/V tensors into a wrapped model; key sets must match exactly."""
    expected = set(adapter_state_dict(model))
    got = set(state)
    if got != expected:
        missing = sorted(expected - got)[:4]
        surplus = sorted(got - expected)[:4]
        raise ValueError(
            "adapter keys do not match the wrapped model "
            f"(missing {missing}, surplus {surplus})"
        )
    model.load_state_dict(state, strict=False)


def trainable_fraction(model: nn.Module) -> float:
    """Trainable parameter count over total parameter count."""
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    total = sum(p.numel() for p in model.parameters())
    return trainable / total if total else 0.0
