"""Recover numeric forecasts from generated text.

Model output is free text, so extraction must be total: every string maps
to a ParseOutcome carrying the values found, a verdict, and a repaired
sequence of exactly the expected length. Verdicts:

* Clean     - exactly the expected values (and, for the clause format,
  positions one..L in order).
* Missing(k) - k values short; repaired by zero-fill. The clause format
  zero-fills the specific absent positions, the list formats pad the tail
  (they carry no position information).
* Extra(k)  - k values over; repaired by keeping the first expected_len.
* Malformed - no usable numeric run; repaired is all zeros.

Clause-format generalizations beyond the single-fault cases: duplicate or
out-of-order positions, or a mix of missing and out-of-range positions,
are Malformed. Out-of-range positions with the expected range complete
count as Extra.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .codec import POSITION_WORDS, number_to_position_word
from .core import LoadcastError, PromptFormat


class IndexOutOfRange(LoadcastError):
    """Fault injection addressed a value slot that does not exist."""


class VerdictKind(str, Enum):
    CLEAN = "clean"
    MISSING = "missing"
    EXTRA = "extra"
    MALFORMED = "malformed"


@dataclass(frozen=True)
class Verdict:
    """Parse verdict; count is the number of missing/extra values."""

    kind: VerdictKind
    count: int = 0

    def __post_init__(self) -> None:
        if self.kind in (VerdictKind.MISSING, VerdictKind.EXTRA):
            if self.count <= 0:
                raise ValueError(f"{self.kind.value} verdict needs a positive count")
        elif self.count != 0:
            raise ValueError(f"{self.kind.value} verdict carries no count")

    @property
    def is_clean(self) -> bool:
        return self.kind is VerdictKind.CLEAN


CLEAN = Verdict(VerdictKind.CLEAN)
MALFORMED = Verdict(VerdictKind.MALFORMED)


@dataclass(frozen=True)
class ParseOutcome:
    raw_values: tuple[float, ...]
    verdict: Verdict
    repaired: tuple[float, ...]
    expected_len: int
    positions_found: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.repaired) != self.expected_len:
            raise ValueError("repaired length must equal expected_len")


_NUMBER = r"-?\d+(?:\.\d+)?"
_RUN_RE = re.compile(rf"{_NUMBER}(?:\s*,\s*{_NUMBER})*")
_NUMBER_RE = re.compile(_NUMBER)
_PREAMBLE_RE = re.compile(r"as follows\s*,?", re.IGNORECASE)
_CLAUSE_RE = re.compile(
    rf"the\s+electricity\s+consumption\s+of\s+(?:day|hour)\s+"
    rf"([a-z][a-z\- ]*?)\s+is\s+({_NUMBER})",
    re.IGNORECASE,
)
_STEP_RE = re.compile(r"consumption\s+of\s+(day|hour)\s", re.IGNORECASE)


def tail_pad_repair(raw_values, expected_len: int) -> tuple[float, ...]:
    """Truncate to expected_len, then zero-fill the tail."""
    vals = list(raw_values[:expected_len])
    vals.extend(0.0 for _ in range(expected_len - len(vals)))
    return tuple(vals)


def _find_run(text: str) -> re.Match | None:
    """Comma-separated run after the template preamble, else the longest run."""
    m = _PREAMBLE_RE.search(text)
    if m:
        run = _RUN_RE.search(text, m.end())
        if run:
            return run
    runs = list(_RUN_RE.finditer(text))
    if not runs:
        return None
    return max(runs, key=lambda r: len(_NUMBER_RE.findall(r.group())))


def _list_values(text: str) -> tuple[float, ...]:
    run = _find_run(text)
    if run is None:
        return ()
    return tuple(float(s) for s in _NUMBER_RE.findall(run.group()))


def _parse_list(text: str, expected_len: int) -> ParseOutcome:
    raw = _list_values(text)
    n = len(raw)
    if n == 0:
        verdict = MALFORMED
    elif n == expected_len:
        verdict = CLEAN
    elif n < expected_len:
        verdict = Verdict(VerdictKind.MISSING, expected_len - n)
    else:
        verdict = Verdict(VerdictKind.EXTRA, n - expected_len)
    return ParseOutcome(
        raw_values=raw,
        verdict=verdict,
        repaired=tail_pad_repair(raw, expected_len),
        expected_len=expected_len,
    )


def _parse_clauses(text: str, expected_len: int) -> ParseOutcome:
    pairs: list[tuple[int, float]] = []
    for word, number in _CLAUSE_RE.findall(text):
        pos = POSITION_WORDS.get(word.strip().lower())
        if pos is not None:
            pairs.append((pos, float(number)))

    raw = tuple(v for _, v in pairs)
    positions = tuple(p for p, _ in pairs)
    zeros = (0.0,) * expected_len

    def outcome(verdict: Verdict, repaired) -> ParseOutcome:
        return ParseOutcome(
            raw_values=raw,
            verdict=verdict,
            repaired=tuple(repaired),
            expected_len=expected_len,
            positions_found=positions,
        )

    if not pairs:
        return outcome(MALFORMED, zeros)
    if any(b <= a for a, b in zip(positions, positions[1:])):
        return outcome(MALFORMED, zeros)

    in_range = [p for p in positions if p <= expected_len]
    beyond = len(positions) - len(in_range)
    missing = expected_len - len(in_range)
    if beyond and missing:
        return outcome(MALFORMED, zeros)
    if beyond:
        return outcome(Verdict(VerdictKind.EXTRA, beyond), raw[:expected_len])
    if missing:
        by_pos = dict(pairs)
        repaired = [by_pos.get(i, 0.0) for i in range(1, expected_len + 1)]
        return outcome(Verdict(VerdictKind.MISSING, missing), repaired)
    return outcome(CLEAN, raw)


def parse_prediction(
    text: str, format: PromptFormat, expected_len: int, precision: int = 0
) -> ParseOutcome:
    """Total parse of generated text into a ParseOutcome.

    precision is accepted for signature symmetry with the encoder; parsing
    reads whatever fixed-point digits are present.
    """
    if expected_len < 1:
        raise ValueError("expected_len must be >= 1")
    if format is PromptFormat.ETS:
        return _parse_clauses(text, expected_len)
    return _parse_list(text, expected_len)


@dataclass(frozen=True)
class DropValue:
    """Remove the index-th value (1-based) from the target text."""

    index: int

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("DropValue.index is 1-based")


@dataclass(frozen=True)
class AddValue:
    """Append one surplus value to the target text."""

    value: float


@dataclass(frozen=True)
class Garble:
    """Destroy every digit so no numeric run survives."""


Fault = DropValue | AddValue | Garble

_GARBLE_TABLE = str.maketrans("0123456789", "##########")


def _render_extra(v: float) -> str:
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def _inject_list(text: str, fault: Fault) -> str:
    run = _find_run(text)
    spans = [m.span() for m in _NUMBER_RE.finditer(run.group())]
    offset = run.start()
    if isinstance(fault, DropValue):
        if fault.index > len(spans):
            raise IndexOutOfRange(f"no value at position {fault.index}")
        start, end = spans[fault.index - 1]
        if fault.index < len(spans):
            end = spans[fault.index][0]  # take the following comma too
        elif len(spans) > 1:
            start = spans[fault.index - 2][1]  # last value: take the comma before
        return text[: offset + start] + text[offset + end :]
    _, last_end = spans[-1]
    cut = offset + last_end
    return text[:cut] + "," + _render_extra(fault.value) + text[cut:]


def _inject_clauses(text: str, fault: Fault) -> str:
    matches = list(_CLAUSE_RE.finditer(text))
    if isinstance(fault, DropValue):
        if fault.index > len(matches):
            raise IndexOutOfRange(f"no clause at position {fault.index}")
        m = matches[fault.index - 1]
        end = m.end()
        while end < len(text) and text[end] in ",. ":
            end += 1
        return text[: m.start()] + text[end:]
    step = _STEP_RE.search(text)
    step_word = step.group(1).lower() if step else "day"
    word = number_to_position_word(len(matches) + 1)
    clause = (
        f"the electricity consumption of {step_word} "
        f"{word} is {_render_extra(fault.value)}."
    )
    return text.rstrip().rstrip(".") + ", " + clause


def inject_fault(record_target: str, fault: Fault, format: PromptFormat) -> str:
    """Mutate a Clean target so it parses Missing(1)/Extra(1)/Malformed.

    DropValue removes one value (the clause format loses that position),
    AddValue appends one, Garble blanks every digit.
    """
    if isinstance(fault, Garble):
        return record_target.translate(_GARBLE_TABLE)
    if format is PromptFormat.ETS:
        return _inject_clauses(record_target, fault)
    return _inject_list(record_target, fault)
