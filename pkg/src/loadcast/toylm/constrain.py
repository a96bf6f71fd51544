"""Template-constrained and greedy batched decoding.

The automaton walks the byte-level shape of a target text: literal
segments are forced outright, numeric slots admit digits (bounded width,
no leading zeros, fixed decimal places) plus the legal continuation
bytes. Masking logits through it guarantees the generated text parses
Clean no matter what the model weights are.

Generation recomputes the full forward pass every step (no key/value
cache); batches are grouped by prompt length so all live sequences in a
group stay aligned and need no padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import LoadcastError, PromptFormat, Resolution
from ..codec import number_to_position_word
from .model import ToyLmConfig, logits_for_last
from .tokenizer import EOS, decode_bytes, encode_prompt

_DIGITS = tuple(ord(c) for c in "0123456789")
_DOT = ord(".")


class PromptTooLong(LoadcastError):
    """Prompt leaves no room for generation inside the context window."""


@dataclass(frozen=True)
class NumberSlot:
    max_int_digits: int = 7
    precision: int = 0


# Automaton states are tuples:
#   ("lit", seg, pos)                      inside a literal segment
#   ("num", seg, n_int, zero_led, n_frac)  inside a number; n_frac is None
#                                          until the decimal point is eaten
#   ("end",)                               template done, only EOS is legal
_END = ("end",)


class TemplateAutomaton:
    """Byte-level DFA over one target template."""

    def __init__(self, segments: list):
        converted = [
            s.encode("utf-8") if isinstance(s, str) else s for s in segments
        ]
        self.segments = [s for s in converted if not (isinstance(s, bytes) and not s)]
        if not self.segments:
            raise ValueError("automaton needs at least one non-empty segment")

    @classmethod
    def for_format(
        cls,
        format: PromptFormat,
        expected_len: int,
        resolution: Resolution = Resolution.DAILY,
        precision: int = 0,
        unit_label: str = "kWh",
        max_int_digits: int = 7,
    ) -> "TemplateAutomaton":
        slot = NumberSlot(max_int_digits=max_int_digits, precision=precision)
        step = resolution.step_word
        segments: list = []
        if format is PromptFormat.ETS:
            for i in range(1, expected_len + 1):
                article = "The" if i == 1 else ", the"
                segments.append(
                    f"{article} electricity consumption of {step} "
                    f"{number_to_position_word(i)} is "
                )
                segments.append(slot)
            segments.append(".")
        else:
            segments.append(
                f"The electricity consumption of each {step} is as follows, "
            )
            for i in range(expected_len):
                if i:
                    segments.append(",")
                segments.append(slot)
            segments.append(f"{unit_label}.")
        return cls(segments)

    @property
    def max_len(self) -> int:
        """Upper bound on emitted tokens, including the closing EOS."""
        total = 1
        for seg in self.segments:
            if isinstance(seg, NumberSlot):
                total += seg.max_int_digits + (
                    1 + seg.precision if seg.precision else 0
                )
            else:
                total += len(seg)
        return total

    def initial(self):
        return self._enter(0)

    def _enter(self, seg: int):
        if seg == len(self.segments):
            return _END
        if isinstance(self.segments[seg], NumberSlot):
            return ("num", seg, 0, False, None)
        return ("lit", seg, 0)

    def _next_literal_byte(self, seg: int) -> int:
        """First byte after a number slot; slots are always followed by a literal."""
        following = self.segments[seg + 1]
        return following[0]

    def allowed(self, state) -> tuple[int, ...]:
        kind = state[0]
        if kind == "end":
            return (EOS,)
        if kind == "lit":
            _, seg, pos = state
            return (self.segments[seg][pos],)
        _, seg, n_int, zero_led, n_frac = state
        slot: NumberSlot = self.segments[seg]
        if n_frac is not None:
            if n_frac < slot.precision:
                return _DIGITS
            return (self._next_literal_byte(seg),)
        out: list[int] = []
        if n_int == 0:
            return _DIGITS
        if not zero_led and n_int < slot.max_int_digits:
            out.extend(_DIGITS)
        if slot.precision:
            out.append(_DOT)
        else:
            out.append(self._next_literal_byte(seg))
        return tuple(out)

    def advance(self, state, token: int):
        if token not in self.allowed(state):
            raise ValueError(f"token {token} not legal in state {state}")
        kind = state[0]
        if kind == "end":
            return _END
        if kind == "lit":
            _, seg, pos = state
            pos += 1
            if pos == len(self.segments[seg]):
                return self._enter(seg + 1)
            return ("lit", seg, pos)
        _, seg, n_int, zero_led, n_frac = state
        slot: NumberSlot = self.segments[seg]
        if n_frac is not None:
            if token in _DIGITS:
                return ("num", seg, n_int, zero_led, n_frac + 1)
            return self._step_out(seg, token)
        if token == _DOT and slot.precision:
            # Only a decimal point when the slot takes one; otherwise a
            # "." here is the following literal (the clause-final period).
            return ("num", seg, n_int, zero_led, 0)
        if token in _DIGITS:
            zero_led = zero_led or (n_int == 0 and token == _DIGITS[0])
            return ("num", seg, n_int + 1, zero_led, None)
        return self._step_out(seg, token)

    def _step_out(self, seg: int, token: int):
        state = self._enter(seg + 1)
        return self.advance(state, token)


def generate_batch(
    params,
    cfg: ToyLmConfig,
    prompts: list[str],
    *,
    max_tokens: int,
    automaton: TemplateAutomaton | None = None,
) -> list[str]:
    """Greedy (or automaton-constrained) completion of every prompt.

    Results come back in prompt order. Prompts of equal token length run
    in lockstep; the causal mask makes padding unnecessary because every
    sequence in a group is always the same length.
    """
    if max_tokens < 0:
        raise ValueError("max_tokens must be >= 0")
    token_prompts = [encode_prompt(p) for p in prompts]
    for p in token_prompts:
        if len(p) >= cfg.context_len:
            raise PromptTooLong(
                f"prompt of {len(p)} tokens fills the context ({cfg.context_len})"
            )

    outputs: list[list[int]] = [[] for _ in prompts]
    groups: dict[int, list[int]] = {}
    for i, p in enumerate(token_prompts):
        groups.setdefault(len(p), []).append(i)

    for length, members in sorted(groups.items()):
        ids = np.array([token_prompts[i] for i in members], dtype=int)
        states = [automaton.initial() if automaton else None for _ in members]
        live = list(range(len(members)))
        steps = 0
        while live and steps < max_tokens and ids.shape[1] < cfg.context_len:
            logits = logits_for_last(params, cfg, ids[live])
            chosen = np.empty(len(live), dtype=int)
            finished: list[int] = []
            for row, member_pos in enumerate(live):
                if automaton is not None:
                    state = states[member_pos]
                    allowed = automaton.allowed(state)
                    token = allowed[int(np.argmax(logits[row, list(allowed)]))]
                    states[member_pos] = automaton.advance(state, token)
                else:
                    token = int(np.argmax(logits[row]))
                chosen[row] = token
                if token == EOS:
                    finished.append(member_pos)
                else:
                    outputs[members[member_pos]].append(token)
            column = np.zeros((len(members), 1), dtype=int)
            column[live, 0] = chosen
            ids = np.concatenate([ids, column], axis=1)
            live = [m for m in live if m not in finished]
            steps += 1

    return [decode_bytes(out) for out in outputs]
