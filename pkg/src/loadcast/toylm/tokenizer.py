"""Byte-level tokenization: ids 0..255 are raw bytes, then three specials.

Working on bytes sidesteps tokenizer ambiguity entirely; every numeric
string has exactly one encoding, so generation and parsing stay aligned.
"""

from __future__ import annotations

BOS = 256
SEP = 257
EOS = 258
VOCAB_SIZE = 259

_SPECIALS = {BOS, SEP, EOS}


def encode_text(text: str) -> list[int]:
    return list(text.encode("utf-8"))


def decode_bytes(ids) -> str:
    """Bytes back to text; special ids are dropped."""
    return bytes(i for i in ids if i not in _SPECIALS).decode("utf-8", errors="replace")


def encode_record(input_text: str, target_text: str) -> tuple[list[int], list[int]]:
    """Full training sequence and its loss mask.

    Sequence is BOS input SEP target EOS; the mask marks positions whose
    next-token prediction is scored, i.e. the target bytes and the EOS.
    """
    in_ids = encode_text(input_text)
    tgt_ids = encode_text(target_text)
    ids = [BOS] + in_ids + [SEP] + tgt_ids + [EOS]
    sep_at = 1 + len(in_ids)
    mask = [0] * len(ids)
    for i in range(sep_at, len(ids) - 1):
        mask[i] = 1
    return ids, mask


def encode_prompt(input_text: str) -> list[int]:
    """Generation-time prefix: everything up to and including SEP."""
    return [BOS] + encode_text(input_text) + [SEP]
