"""Byte-level decoder-only transformer, trained and run purely in numpy."""

from .tokenizer import (
    BOS, EOS, SEP, VOCAB_SIZE,
    decode_bytes, encode_prompt, encode_record, encode_text,
)
from .model import (
    ContextOverflow, ToyLmConfig, init_params, add_lora_adapters, forward,
    loss_and_grads, scaled_dot_attention, trainable_keys, count_params,
)
from .train import Adam, TrainResult, train, token_accuracy, tokenize_records, save_checkpoint, load_checkpoint
from .constrain import TemplateAutomaton, generate_batch, PromptTooLong

__all__ = [
    "BOS", "EOS", "SEP", "VOCAB_SIZE",
    "decode_bytes", "encode_prompt", "encode_record", "encode_text",
    "ContextOverflow", "ToyLmConfig", "init_params", "add_lora_adapters",
    "forward", "loss_and_grads", "scaled_dot_attention",
    "trainable_keys", "count_params",
    "Adam", "TrainResult", "train", "token_accuracy", "tokenize_records",
    "save_checkpoint", "load_checkpoint",
    "TemplateAutomaton", "generate_batch", "PromptTooLong",
]
