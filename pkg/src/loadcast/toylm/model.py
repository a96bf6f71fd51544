"""Decoder-only transformer in plain numpy with hand-written gradients.

Pre-norm residual blocks, learned positional embeddings, multi-head
scaled dot-product attention with a causal mask, tanh-approximated GELU
in the feed-forward, untied output projection. Every forward caches what
its backward needs, so analytic gradients can be verified against finite
differences in double precision.

Low-rank adapters attach to the attention projections and the two
feed-forward matrices: effective output is x @ W plus
(alpha/rank) * dropout(x) @ U @ V, with U Gaussian and V zero at init so
an untouched adapter is an exact no-op.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..core import LoadcastError, derive_rng
from .tokenizer import VOCAB_SIZE

_MASK_VALUE = -1e30
_LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)

LORA_TARGETS = ("attn.wq", "attn.wk", "attn.wv", "attn.wo", "mlp.w1", "mlp.w2")


class ContextOverflow(LoadcastError):
    """A sequence does not fit inside the model's context window."""


class ShapeMismatch(LoadcastError):
    """Incompatible tensor shapes fed to an attention primitive."""


@dataclass(frozen=True)
class ToyLmConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    context_len: int = 1024
    vocab_size: int = VOCAB_SIZE
    mode: str = "full"  # "full" or "lora"
    lora_rank: int = 8
    lora_alpha: float = 32.0
    lora_dropout: float = 0.1
    lr: float = 5e-5
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.mode not in ("full", "lora"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.lora_rank < 1:
            raise ValueError("lora_rank must be >= 1")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    @property
    def d_ff(self) -> int:
        return 4 * self.d_model

    def with_mode(self, mode: str) -> "ToyLmConfig":
        return replace(self, mode=mode)


def init_params(cfg: ToyLmConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    rng = derive_rng(cfg.seed, "toylm-init")

    def normal(*shape):
        return (rng.normal(0.0, 0.02, size=shape)).astype(dtype)

    d, f, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
    params: dict[str, np.ndarray] = {
        "tok_emb": normal(v, d),
        "pos_emb": normal(cfg.context_len, d),
        "lnf.g": np.ones(d, dtype=dtype),
        "lnf.b": np.zeros(d, dtype=dtype),
        "w_out": normal(d, v),
    }
    for layer in range(cfg.n_layers):
        p = f"l{layer}."
        params[p + "ln1.g"] = np.ones(d, dtype=dtype)
        params[p + "ln1.b"] = np.zeros(d, dtype=dtype)
        params[p + "attn.wq"] = normal(d, d)
        params[p + "attn.wk"] = normal(d, d)
        params[p + "attn.wv"] = normal(d, d)
        params[p + "attn.wo"] = normal(d, d)
        params[p + "ln2.g"] = np.ones(d, dtype=dtype)
        params[p + "ln2.b"] = np.zeros(d, dtype=dtype)
        params[p + "mlp.w1"] = normal(d, f)
        params[p + "mlp.b1"] = np.zeros(f, dtype=dtype)
        params[p + "mlp.w2"] = normal(f, d)
        params[p + "mlp.b2"] = np.zeros(d, dtype=dtype)
    return params


def add_lora_adapters(params: dict[str, np.ndarray], cfg: ToyLmConfig) -> None:
    """Attach U/V pairs to every attention and feed-forward matrix."""
    rng = derive_rng(cfg.seed, "toylm-lora-init")
    for layer in range(cfg.n_layers):
        for target in LORA_TARGETS:
            key = f"l{layer}.{target}"
            w = params[key]
            d_in, d_out = w.shape
            if cfg.lora_rank > min(d_in, d_out) // 4:
                raise ValueError(
                    f"lora_rank {cfg.lora_rank} too large for {key} "
                    f"({d_in}x{d_out}); need rank <= min/4"
                )
            params[key + ".lora_u"] = rng.normal(
                0.0, 0.02, size=(d_in, cfg.lora_rank)
            ).astype(w.dtype)
            params[key + ".lora_v"] = np.zeros(
                (cfg.lora_rank, d_out), dtype=w.dtype
            )


def trainable_keys(params: dict[str, np.ndarray], cfg: ToyLmConfig) -> list[str]:
    if cfg.mode == "lora":
        return [k for k in params if k.endswith((".lora_u", ".lora_v"))]
    return [k for k in params if not k.endswith((".lora_u", ".lora_v"))]


def count_params(params: dict[str, np.ndarray], keys=None) -> int:
    keys = params.keys() if keys is None else keys
    return sum(params[k].size for k in keys)


def _linear_forward(params, key, x2d, cfg, dropout_rng):
    """x @ W with the optional low-rank adapter path; returns (y, cache)."""
    w = params[key]
    y = x2d @ w
    cache = {"x": x2d, "key": key}
    u_key = key + ".lora_u"
    if u_key in params:
        scale = cfg.lora_alpha / cfg.lora_rank
        drop_x = x2d
        drop_mask = None
        if dropout_rng is not None and cfg.lora_dropout > 0.0:
            keep = 1.0 - cfg.lora_dropout
            drop_mask = (
                dropout_rng.random(x2d.shape) < keep
            ).astype(x2d.dtype) / keep
            drop_x = x2d * drop_mask
        u_out = drop_x @ params[u_key]
        y = y + scale * (u_out @ params[key + ".lora_v"])
        cache.update(drop_x=drop_x, drop_mask=drop_mask, u_out=u_out, scale=scale)
    return y, cache


def _linear_backward(params, cache, d_y, grads):
    x2d = cache["x"]
    key = cache["key"]
    w = params[key]
    grads[key] = grads.get(key, 0) + x2d.T @ d_y
    d_x = d_y @ w.T
    if "u_out" in cache:
        scale = cache["scale"]
        u, v = params[key + ".lora_u"], params[key + ".lora_v"]
        d_u_out = scale * (d_y @ v.T)
        grads[key + ".lora_v"] = grads.get(key + ".lora_v", 0) + scale * (
            cache["u_out"].T @ d_y
        )
        grads[key + ".lora_u"] = grads.get(key + ".lora_u", 0) + (
            cache["drop_x"].T @ d_u_out
        )
        d_drop_x = d_u_out @ u.T
        if cache["drop_mask"] is not None:
            d_drop_x = d_drop_x * cache["drop_mask"]
        d_x = d_x + d_drop_x
    return d_x


def _layernorm_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + _LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _layernorm_backward(d_y, cache, g):
    xhat, rstd = cache
    d_g = (d_y * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    d_b = d_y.reshape(-1, xhat.shape[-1]).sum(axis=0)
    d_xhat = d_y * g
    d_x = rstd * (
        d_xhat
        - d_xhat.mean(axis=-1, keepdims=True)
        - xhat * (d_xhat * xhat).mean(axis=-1, keepdims=True)
    )
    return d_x, d_g, d_b


def _gelu_forward(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * x * (1.0 + t), (x, t)


def _gelu_backward(d_y, cache):
    x, t = cache
    du = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return d_y * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def _split_heads(x2d, b, t, h, d_k):
    return x2d.reshape(b, t, h, d_k).transpose(0, 2, 1, 3)


def _merge_heads(x4d):
    b, h, t, d_k = x4d.shape
    return x4d.transpose(0, 2, 1, 3).reshape(b * t, h * d_k)


def scaled_dot_attention(q, k, v, causal: bool = True):
    """softmax(q k^T / sqrt(d_k)) v over the trailing two axes.

    q, k, v are (..., T, d_k); rows of the attention matrix sum to one.
    """
    if q.shape != k.shape or k.shape != v.shape:
        raise ShapeMismatch(f"q/k/v shapes differ: {q.shape} {k.shape} {v.shape}")
    d_k = q.shape[-1]
    scores = (q @ np.swapaxes(k, -1, -2)) / math.sqrt(d_k)
    if causal:
        t = q.shape[-2]
        scores = scores + np.triu(
            np.full((t, t), _MASK_VALUE, dtype=q.dtype), k=1
        )
    scores = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    return weights @ v, weights


def forward(params, cfg: ToyLmConfig, ids: np.ndarray, dropout_rng=None):
    """Logits (B, T, vocab) plus the cache stack for loss_and_grads."""
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise ShapeMismatch("ids must be (batch, time)")
    b, t = ids.shape
    if t > cfg.context_len:
        raise ContextOverflow(f"sequence length {t} > context {cfg.context_len}")

    x = params["tok_emb"][ids] + params["pos_emb"][:t][None, :, :]
    caches = {"ids": ids, "layers": []}
    d, h, d_k = cfg.d_model, cfg.n_heads, cfg.d_k

    for layer in range(cfg.n_layers):
        p = f"l{layer}."
        lc: dict = {}

        a, lc["ln1"] = _layernorm_forward(x, params[p + "ln1.g"], params[p + "ln1.b"])
        a2d = a.reshape(b * t, d)
        q2d, lc["wq"] = _linear_forward(params, p + "attn.wq", a2d, cfg, dropout_rng)
        k2d, lc["wk"] = _linear_forward(params, p + "attn.wk", a2d, cfg, dropout_rng)
        v2d, lc["wv"] = _linear_forward(params, p + "attn.wv", a2d, cfg, dropout_rng)
        q = _split_heads(q2d, b, t, h, d_k)
        k = _split_heads(k2d, b, t, h, d_k)
        v = _split_heads(v2d, b, t, h, d_k)
        ctx, weights = scaled_dot_attention(q, k, v)
        lc["attn"] = (q, k, v, weights)
        ctx2d = _merge_heads(ctx)
        attn_out, lc["wo"] = _linear_forward(params, p + "attn.wo", ctx2d, cfg, dropout_rng)
        x = x + attn_out.reshape(b, t, d)

        bx, lc["ln2"] = _layernorm_forward(x, params[p + "ln2.g"], params[p + "ln2.b"])
        z1, lc["w1"] = _linear_forward(params, p + "mlp.w1", bx.reshape(b * t, d), cfg, dropout_rng)
        z1 = z1 + params[p + "mlp.b1"]
        a1, lc["gelu"] = _gelu_forward(z1)
        z2, lc["w2"] = _linear_forward(params, p + "mlp.w2", a1, cfg, dropout_rng)
        z2 = z2 + params[p + "mlp.b2"]
        x = x + z2.reshape(b, t, d)

        caches["layers"].append(lc)

    xf, caches["lnf"] = _layernorm_forward(x, params["lnf.g"], params["lnf.b"])
    caches["xf2d"] = xf.reshape(b * t, d)
    logits = (caches["xf2d"] @ params["w_out"]).reshape(b, t, cfg.vocab_size)
    return logits, caches


def _attention_backward(d_ctx, cache):
    """Gradients through softmax(QK^T/sqrt(dk))V for all heads at once."""
    q, k, v, weights = cache
    d_k = q.shape[-1]
    d_weights = d_ctx @ np.swapaxes(v, -1, -2)
    d_v = np.swapaxes(weights, -1, -2) @ d_ctx
    d_scores = weights * (
        d_weights - (d_weights * weights).sum(axis=-1, keepdims=True)
    )
    d_scores /= math.sqrt(d_k)
    d_q = d_scores @ k
    d_kk = np.swapaxes(d_scores, -1, -2) @ q
    return d_q, d_kk, d_v


def loss_and_grads(params, cfg: ToyLmConfig, ids, loss_mask, dropout_rng=None):
    """Masked next-token cross-entropy and gradients for every parameter.

    loss_mask[b, t] = 1 means position t's prediction of token t+1 is
    scored; the loss is the mean over scored positions.
    """
    ids = np.asarray(ids)
    loss_mask = np.asarray(loss_mask, dtype=float)
    b, t = ids.shape
    logits, caches = forward(params, cfg, ids, dropout_rng)

    shifted = np.zeros_like(loss_mask)
    shifted[:, : t - 1] = loss_mask[:, : t - 1]
    n_scored = shifted.sum()
    if n_scored == 0:
        raise ValueError("loss_mask scores no positions")

    z = logits - logits.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    targets = np.zeros((b, t), dtype=int)
    targets[:, : t - 1] = ids[:, 1:]
    picked = np.take_along_axis(log_probs, targets[..., None], axis=-1)[..., 0]
    loss = float(-(picked * shifted).sum() / n_scored)

    d_logits = np.exp(log_probs)
    rows = np.arange(b)[:, None], np.arange(t)[None, :]
    d_logits[rows[0], rows[1], targets] -= 1.0
    d_logits *= (shifted / n_scored)[..., None]

    grads: dict[str, np.ndarray] = {}
    d_logits2d = d_logits.reshape(b * t, cfg.vocab_size)
    grads["w_out"] = caches["xf2d"].T @ d_logits2d
    d_xf = (d_logits2d @ params["w_out"].T).reshape(b, t, cfg.d_model)
    d_x, grads["lnf.g"], grads["lnf.b"] = _layernorm_backward(
        d_xf, caches["lnf"], params["lnf.g"]
    )

    d, h, d_k = cfg.d_model, cfg.n_heads, cfg.d_k
    for layer in reversed(range(cfg.n_layers)):
        p = f"l{layer}."
        lc = caches["layers"][layer]

        d_z2 = d_x.reshape(b * t, d)
        grads[p + "mlp.b2"] = d_z2.sum(axis=0)
        d_a1 = _linear_backward(params, lc["w2"], d_z2, grads)
        d_z1 = _gelu_backward(d_a1, lc["gelu"])
        grads[p + "mlp.b1"] = d_z1.sum(axis=0)
        d_bx = _linear_backward(params, lc["w1"], d_z1, grads).reshape(b, t, d)
        d_x_ln2, grads[p + "ln2.g"], grads[p + "ln2.b"] = _layernorm_backward(
            d_bx, lc["ln2"], params[p + "ln2.g"]
        )
        d_x = d_x + d_x_ln2

        d_attn_out = d_x.reshape(b * t, d)
        d_ctx2d = _linear_backward(params, lc["wo"], d_attn_out, grads)
        d_ctx = _split_heads(d_ctx2d, b, t, h, d_k)
        d_q, d_kk, d_v = _attention_backward(d_ctx, lc["attn"])
        d_a2d = _linear_backward(params, lc["wq"], _merge_heads(d_q), grads)
        d_a2d += _linear_backward(params, lc["wk"], _merge_heads(d_kk), grads)
        d_a2d += _linear_backward(params, lc["wv"], _merge_heads(d_v), grads)
        d_x_ln1, grads[p + "ln1.g"], grads[p + "ln1.b"] = _layernorm_backward(
            d_a2d.reshape(b, t, d), lc["ln1"], params[p + "ln1.g"]
        )
        d_x = d_x + d_x_ln1

    grads["pos_emb"] = np.zeros_like(params["pos_emb"])
    grads["pos_emb"][:t] = d_x.sum(axis=0)
    grads["tok_emb"] = np.zeros_like(params["tok_emb"])
    np.add.at(grads["tok_emb"], ids.reshape(-1), d_x.reshape(b * t, d))

    return loss, grads


def logits_for_last(params, cfg: ToyLmConfig, ids: np.ndarray) -> np.ndarray:
    """Next-token logits at each sequence's final position, (B, vocab)."""
    logits, _ = forward(params, cfg, ids)
    return logits[:, -1, :]
