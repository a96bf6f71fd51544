"""HTTP face of the registry: the completions contract.

POST /v1/completions takes {"model", "prompt", "max_tokens",
"temperature"} and answers {"choices": [{"text": ...}]}. Unknown or
invalid fields are a 422 (strict schema), an unresolvable model id is a
503, a prompt that cannot fit the model context is a 400. Generation
runs inside a bounded slot pool so a burst of requests cannot
oversubscribe the host.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from .registry import ModelNotAvailable, ModelRegistry, PromptTooLong


class CompletionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: str = Field(min_length=1)
    prompt: str = Field(min_length=1)
    max_tokens: int = Field(default=16, ge=0)
    temperature: float = Field(default=0.0, ge=0.0)


class Choice(BaseModel):
    text: str


class Usage(BaseModel):
    prompt_tokens: int
    completion_tokens: int
    total_tokens: int


class CompletionResponse(BaseModel):
    choices: list[Choice]
    usage: Usage


def create_app(registry: ModelRegistry | None = None, *, max_slots: int = 2) -> FastAPI:
    """Build the application; models load lazily on first request."""
    if max_slots < 1:
        raise ValueError(f"max_slots must be >= 1, got {max_slots}")
    if registry is None:
        registry = ModelRegistry()
    slots = threading.BoundedSemaphore(max_slots)
    app = FastAPI(title="loadbridge", docs_url=None, redoc_url=None)

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "models": registry.loaded_ids()}

    @app.post("/v1/completions")
    def completions(request: CompletionRequest) -> CompletionResponse:
        try:
            loaded = registry.resolve(request.model)
        except ModelNotAvailable as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        with slots:
            try:
                result = loaded.complete(
                    request.prompt,
                    max_tokens=request.max_tokens,
                    temperature=request.temperature,
                )
            except PromptTooLong as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
        return CompletionResponse(
            choices=[Choice(text=result.text)],
            usage=Usage(
                prompt_tokens=result.prompt_tokens,
                completion_tokens=result.completion_tokens,
                total_tokens=result.prompt_tokens + result.completion_tokens,
            ),
        )

    return app
