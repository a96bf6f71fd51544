"""Text-generation backends behind one small interface.

A backend takes a GenerationRequest and returns completion text. Each
declares whether concurrent generate() calls are safe via parallel_safe;
the harness serializes backends that are not (the fault injector's
deterministic schedule depends on call order).
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from .core import LoadcastError, PromptFormat, derive_rng
from .extract import AddValue, DropValue, Fault, Garble, inject_fault


class BackendUnavailable(LoadcastError):
    """The backend cannot serve this request."""


class RequestTimeout(LoadcastError):
    """Remote call exceeded its deadline after all retries."""


class RateLimited(LoadcastError):
    """Remote endpoint kept answering 429 across all retries."""


class MalformedResponse(LoadcastError):
    """Remote endpoint answered with an unusable body."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_tokens: int = 256
    temperature: float = 0.0
    stop: str | None = None
    request_id: str = ""

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("GenerationRequest.prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("GenerationRequest.max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("GenerationRequest.temperature must be >= 0")


@runtime_checkable
class Backend(Protocol):
    parallel_safe: bool

    def generate(self, req: GenerationRequest) -> str: ...


class EchoOracle:
    """Returns the completion registered for each prompt.

    The zero-error reference: wiring it through the whole pipeline must
    produce H=0, MAE=0, RMSE=0.
    """

    parallel_safe = True

    def __init__(self, completions: dict[str, str] | None = None):
        self._completions = dict(completions or {})

    @classmethod
    def from_records(cls, records) -> "EchoOracle":
        return cls({r.input_text: r.target_text for r in records})

    def register(self, prompt: str, completion: str) -> None:
        self._completions[prompt] = completion

    def generate(self, req: GenerationRequest) -> str:
        try:
            return self._completions[req.prompt]
        except KeyError:
            raise BackendUnavailable(
                "no completion registered for this prompt"
            ) from None


class FaultInjector:
    """Wraps a backend and corrupts a deterministic share of completions.

    Two schedules: "bernoulli" draws one seeded coin per call, so the
    realized fault count is the exact count of successful draws;
    "paced" spreads faults evenly so the count is floor(rate * n) after
    n calls. Call order matters, hence parallel_safe is False.
    """

    parallel_safe = False

    def __init__(
        self,
        inner: Backend,
        rate: float,
        seed: int,
        format: PromptFormat = PromptFormat.TEXT,
        expected_len: int = 7,
        kinds: tuple[str, ...] = ("drop",),
        schedule: str = "bernoulli",
    ):
        if not 0.0 <= rate <= 1.0:
            raise ValueError("rate must be within [0, 1]")
        if schedule not in ("bernoulli", "paced"):
            raise ValueError(f"unknown schedule {schedule!r}")
        unknown = set(kinds) - {"drop", "add", "garble"}
        if unknown:
            raise ValueError(f"unknown fault kinds {sorted(unknown)}")
        self.inner = inner
        self.rate = rate
        self.format = PromptFormat(format)
        self.expected_len = expected_len
        self.kinds = kinds
        self.schedule = schedule
        self._rng = derive_rng(seed, "fault-injector")
        self._calls = 0
        self.fault_count = 0

    def _due(self) -> bool:
        if self.schedule == "bernoulli":
            return bool(self._rng.random() < self.rate)
        before = int(self._calls * self.rate)
        after = int((self._calls + 1) * self.rate)
        return after > before

    def _pick_fault(self) -> Fault:
        kind = self.kinds[int(self._rng.integers(len(self.kinds)))]
        if kind == "drop":
            return DropValue(int(self._rng.integers(1, self.expected_len + 1)))
        if kind == "add":
            return AddValue(int(self._rng.integers(0, 100000)))
        return Garble()

    def generate(self, req: GenerationRequest) -> str:
        due = self._due()
        self._calls += 1
        text = self.inner.generate(req)
        if not due or self.rate == 0.0:
            return text
        self.fault_count += 1
        return inject_fault(text, self._pick_fault(), self.format)


class ToyLmBackend:
    """In-process transformer backend, greedy or template-constrained.

    In constrained mode the automaton's own length bound wins over
    req.max_tokens, because a truncated template could not parse Clean.
    Requests are answered one at a time through generate(); harnesses
    that batch should call generate_many directly.
    """

    parallel_safe = True

    def __init__(self, params, cfg, automaton=None):
        self.params = params
        self.cfg = cfg
        self.automaton = automaton

    @classmethod
    def from_checkpoint(cls, path, automaton=None) -> "ToyLmBackend":
        from .toylm import load_checkpoint

        params, cfg = load_checkpoint(path)
        return cls(params, cfg, automaton=automaton)

    def _budget(self, max_tokens: int) -> int:
        if self.automaton is not None:
            return max(max_tokens, self.automaton.max_len)
        return max_tokens

    def generate(self, req: GenerationRequest) -> str:
        return self.generate_many([req.prompt], req.max_tokens)[0]

    def generate_many(self, prompts: list[str], max_tokens: int) -> list[str]:
        from .toylm import generate_batch

        return generate_batch(
            self.params, self.cfg, prompts,
            max_tokens=self._budget(max_tokens),
            automaton=self.automaton,
        )


class RemoteBackend:
    """OpenAI-style completions client over HTTP.

    Configuration comes only from the environment so that credentials
    never land in manifests or shell history:

    * LOADCAST_REMOTE_URL   - base URL, e.g. http://localhost:8001
    * LOADCAST_REMOTE_MODEL - model identifier sent with each request
    * LOADCAST_REMOTE_KEY   - optional bearer token

    Retries transient failures (connection errors, 429, 5xx) three times
    with exponential backoff; at most max_in_flight requests run at once.
    """

    parallel_safe = True
    path = "/v1/completions"

    def __init__(
        self,
        base_url: str | None = None,
        model: str | None = None,
        *,
        timeout: float = 60.0,
        attempts: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
    ):
        self.base_url = (base_url or os.environ.get("LOADCAST_REMOTE_URL", "")).rstrip("/")
        if not self.base_url:
            raise BackendUnavailable("LOADCAST_REMOTE_URL is not set")
        if attempts < 1:
            raise ValueError("attempts must be >= 1")
        self.model = model or os.environ.get("LOADCAST_REMOTE_MODEL", "default")
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff
        self._slots = threading.Semaphore(max_in_flight)

    def generate(self, req: GenerationRequest) -> str:
        import requests

        payload = {
            "model": self.model,
            "prompt": req.prompt,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        headers = {}
        key = os.environ.get("LOADCAST_REMOTE_KEY")
        if key:
            headers["Authorization"] = f"Bearer {key}"

        last_error: LoadcastError | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            with self._slots:
                try:
                    response = requests.post(
                        self.base_url + self.path,
                        json=payload, headers=headers, timeout=self.timeout,
                    )
                except requests.Timeout:
                    last_error = RequestTimeout(
                        f"no response within {self.timeout}s"
                    )
                    continue
                except requests.ConnectionError as exc:
                    last_error = BackendUnavailable(str(exc))
                    continue
            if response.status_code == 429:
                last_error = RateLimited("server answered 429")
                continue
            if response.status_code >= 500:
                last_error = BackendUnavailable(
                    f"server answered {response.status_code}"
                )
                continue
            if response.status_code != 200:
                raise MalformedResponse(
                    f"unexpected status {response.status_code}: {response.text[:200]}"
                )
            return self._extract_text(response)
        raise last_error

    @staticmethod
    def _extract_text(response) -> str:
        try:
            body = response.json()
        except ValueError as exc:
            raise MalformedResponse(f"response is not JSON: {exc}") from exc
        choices = body.get("choices")
        if not isinstance(choices, list) or not choices:
            raise MalformedResponse("response carries no choices array")
        text = choices[0].get("text")
        if not isinstance(text, str):
            raise MalformedResponse("first choice carries no text field")
        return text
