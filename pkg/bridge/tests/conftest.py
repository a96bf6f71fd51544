"""Shared fixtures: a tiny local model tree and toolkit-built datasets.

The hub is unreachable here, so tests synthesize their own servable
model: a byte-level tokenizer (one token per byte plus <|endoftext|>)
and a randomly initialised two-layer causal LM, saved under a model
directory keyed by a real access-key-shaped id.
"""

from __future__ import annotations

import subprocess
import sys

import pytest
import torch
from tokenizers import Tokenizer, decoders, models, pre_tokenizers
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

BASE_ID = "openai-community/gpt2"

# A random-init model has near-tied logits, so the reduction-order wobble
# of multi-threaded CPU matmul can flip a greedy argmax between runs.
torch.set_num_threads(1)


def byte_tokenizer() -> PreTrainedTokenizerFast:
    alphabet = sorted(pre_tokenizers.ByteLevel.alphabet())
    vocab = {ch: i for i, ch in enumerate(alphabet)}
    vocab["<|endoftext|>"] = len(vocab)
    tok = Tokenizer(models.BPE(vocab=vocab, merges=[]))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False, use_regex=False)
    tok.decoder = decoders.ByteLevel()
    return PreTrainedTokenizerFast(
        tokenizer_object=tok, eos_token="<|endoftext|>", pad_token="<|endoftext|>"
    )


def tiny_causal_lm(seed: int = 7, **overrides) -> GPT2LMHeadModel:
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=257,
        n_positions=512,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=256,
        eos_token_id=256,
        pad_token_id=256,
        **overrides,
    )
    model = GPT2LMHeadModel(config)
    model.eval()
    return model


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("models")
    target = root / BASE_ID
    tiny_causal_lm().save_pretrained(target)
    byte_tokenizer().save_pretrained(target)
    return root


@pytest.fixture(autouse=True)
def _bridge_env(model_dir, monkeypatch):
    monkeypatch.setenv("BRIDGE_MODEL_DIR", str(model_dir))
    monkeypatch.setenv("HF_HUB_OFFLINE", "1")
    for name in ("LOADCAST_REMOTE_URL", "LOADCAST_REMOTE_MODEL", "LOADCAST_REMOTE_KEY"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """Prompt datasets built by the forecasting toolkit's own CLI."""
    out = tmp_path_factory.mktemp("datasets")
    subprocess.run(
        [
            sys.executable,
            "-m",
            "loadcast.cli",
            "build",
            "--synthetic",
            "--n-steps",
            "200",
            "--seed",
            "3",
            "--split",
            "3,1,1",
            "--window",
            "2,2,2",
            "--out",
            str(out),
        ],
        check=True,
        capture_output=True,
    )
    return out


@pytest.fixture(scope="session")
def train64(dataset_dir, tmp_path_factory):
    """Exactly 64 training records, the fine-tune smoke corpus."""
    rows = (dataset_dir / "train_text.jsonl").read_text().splitlines()
    assert len(rows) >= 64
    path = tmp_path_factory.mktemp("tune") / "train64.jsonl"
    path.write_text("\n".join(rows[:64]) + "\n")
    return path
