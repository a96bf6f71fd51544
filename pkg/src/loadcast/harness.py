"""Run orchestration: ordered generation, scoring, and run manifests.

Generation results are kept in record order no matter how they are
produced: batch-capable backends get one batched call, parallel-safe
backends fan out over a bounded thread pool whose map preserves order,
and everything else runs serially (the fault injector's schedule depends
on call order, so serial is not just a fallback).
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .backends import Backend, GenerationRequest
from .extract import ParseOutcome, parse_prediction, tail_pad_repair
from .metrics import MetricsReport, evaluate


def hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_file(path) -> str:
    return hash_bytes(Path(path).read_bytes())


def hash_config(config: dict) -> str:
    return hash_bytes(json.dumps(config, sort_keys=True).encode("utf-8"))


def package_version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("loadcast")
    except PackageNotFoundError:
        return "0.0.0"


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run byte for byte.

    No timestamps on purpose: re-running the same manifest against a
    deterministic backend must yield identical artifacts.
    """

    seed: int
    config: dict
    dataset_hash: str
    backend_id: str
    version: str

    @property
    def config_hash(self) -> str:
        return hash_config(self.config)

    @property
    def run_key(self) -> str:
        """Content address for the run directory."""
        return hash_config(self.to_dict())[:12]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "dataset_hash": self.dataset_hash,
            "backend_id": self.backend_id,
            "version": self.version,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        return cls(
            seed=d["seed"], config=d["config"], dataset_hash=d["dataset_hash"],
            backend_id=d["backend_id"], version=d["version"],
        )


def _token_budget(records) -> int:
    return max(len(r.target_text.encode("utf-8")) for r in records) + 16


def run_generation(
    backend: Backend, records, *, max_tokens: int | None = None, workers: int = 4
) -> list[str]:
    """One completion per record, returned in record order."""
    if not records:
        return []
    budget = max_tokens or _token_budget(records)
    if hasattr(backend, "generate_many"):
        return backend.generate_many([r.input_text for r in records], budget)
    requests = [
        GenerationRequest(
            prompt=r.input_text, max_tokens=budget, request_id=r.instance_ref
        )
        for r in records
    ]
    if backend.parallel_safe and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(backend.generate, requests))
    return [backend.generate(req) for req in requests]


def target_values(record) -> tuple[float, ...]:
    """Ground-truth horizon recovered from the record's own target text."""
    outcome = parse_prediction(
        record.target_text, record.format, record.expected_len
    )
    if not outcome.verdict.is_clean:
        raise ValueError(
            f"record {record.instance_ref} target does not parse Clean"
        )
    return outcome.repaired


def score_completions(
    records, completions, *, ets_tail_pad: bool = False
) -> tuple[MetricsReport, list[ParseOutcome]]:
    """Parse completions and score them against the records' targets.

    ets_tail_pad forces the position-blind zero-fill repair onto the
    clause format too, for measuring what positional repair buys.
    """
    if len(records) != len(completions):
        raise ValueError("records and completions differ in length")
    outcomes = []
    targets = []
    for record, text in zip(records, completions):
        outcome = parse_prediction(text, record.format, record.expected_len)
        if ets_tail_pad and outcome.positions_found is not None:
            outcome = ParseOutcome(
                raw_values=outcome.raw_values,
                verdict=outcome.verdict,
                repaired=tail_pad_repair(outcome.raw_values, outcome.expected_len),
                expected_len=outcome.expected_len,
                positions_found=outcome.positions_found,
            )
        outcomes.append(outcome)
        targets.append(target_values(record))
    report = evaluate(outcomes, targets, formats=[r.format for r in records])
    return report, outcomes


@dataclass
class EvalResult:
    report: MetricsReport
    outcomes: list[ParseOutcome]
    completions: list[str]


def run_eval(
    records, backend: Backend, *,
    max_tokens: int | None = None, workers: int = 4, ets_tail_pad: bool = False,
) -> EvalResult:
    """encode -> generate -> parse -> score, end to end."""
    completions = run_generation(
        backend, records, max_tokens=max_tokens, workers=workers
    )
    report, outcomes = score_completions(
        records, completions, ets_tail_pad=ets_tail_pad
    )
    return EvalResult(report=report, outcomes=outcomes, completions=completions)


def outcome_log_lines(records, outcomes, completions) -> list[str]:
    """Per-sample JSONL rows for the eval artifact directory."""
    lines = []
    for record, outcome, text in zip(records, outcomes, completions):
        lines.append(json.dumps({
            "instance_ref": record.instance_ref,
            "format": record.format.value,
            "completion": text,
            "verdict": outcome.verdict.kind.value,
            "verdict_count": outcome.verdict.count,
            "raw_values": list(outcome.raw_values),
            "repaired": list(outcome.repaired),
        }, ensure_ascii=False, sort_keys=True))
    return lines
