"""Completion endpoint contract: schema, status codes, slot pool."""

from __future__ import annotations

import threading
import time

import pytest
from conftest import BASE_ID
from fastapi.testclient import TestClient
from transformers import AutoTokenizer

from loadbridge import Completion, ModelRegistry, create_app


@pytest.fixture(scope="module")
def registry(model_dir):
    return ModelRegistry(model_dir)


@pytest.fixture(scope="module")
def client(registry):
    return TestClient(create_app(registry))


def body(**overrides) -> dict:
    base = {
        "model": BASE_ID,
        "prompt": "The electricity consumption of each day",
        "max_tokens": 8,
        "temperature": 0.0,
    }
    base.update(overrides)
    return base


class TestCompletions:
    def test_answers_single_choice(self, client):
        resp = client.post("/v1/completions", json=body())
        assert resp.status_code == 200
        payload = resp.json()
        assert set(payload) == {"choices", "usage"}
        assert len(payload["choices"]) == 1
        assert isinstance(payload["choices"][0]["text"], str)
        usage = payload["usage"]
        assert usage["total_tokens"] == usage["prompt_tokens"] + usage["completion_tokens"]

    def test_deterministic_at_temperature_zero(self, client):
        one = client.post("/v1/completions", json=body(max_tokens=12)).json()
        two = client.post("/v1/completions", json=body(max_tokens=12)).json()
        assert one == two

    def test_completion_respects_token_budget(self, client, model_dir):
        tokenizer = AutoTokenizer.from_pretrained(model_dir / BASE_ID)
        n_prompt = len(tokenizer(body()["prompt"])["input_ids"])
        for budget in (1, 5, 20):
            payload = client.post("/v1/completions", json=body(max_tokens=budget)).json()
            assert payload["usage"]["prompt_tokens"] == n_prompt
            assert 0 < payload["usage"]["completion_tokens"] <= budget

    def test_zero_budget_yields_empty_text(self, client):
        resp = client.post("/v1/completions", json=body(max_tokens=0))
        assert resp.status_code == 200
        assert resp.json()["choices"][0]["text"] == ""
        assert resp.json()["usage"]["completion_tokens"] == 0

    def test_optional_fields_have_defaults(self, client):
        resp = client.post(
            "/v1/completions", json={"model": BASE_ID, "prompt": "The"}
        )
        assert resp.status_code == 200


class TestRejections:
    @pytest.mark.parametrize(
        "payload",
        [
            body(stop=["\n"]),  # unknown field
            body(echo=True),
            {k: v for k, v in body().items() if k != "prompt"},
            {k: v for k, v in body().items() if k != "model"},
            body(prompt=""),
            body(temperature=-0.5),
            body(max_tokens=-1),
            body(max_tokens="ten"),
        ],
        ids=[
            "unknown-stop",
            "unknown-echo",
            "missing-prompt",
            "missing-model",
            "empty-prompt",
            "negative-temperature",
            "negative-budget",
            "non-integer-budget",
        ],
    )
    def test_schema_violation_is_422(self, client, payload):
        assert client.post("/v1/completions", json=payload).status_code == 422

    def test_unknown_model_is_503(self, client):
        resp = client.post("/v1/completions", json=body(model="nobody/nothing"))
        assert resp.status_code == 503
        assert "nobody/nothing" in resp.json()["detail"]

    def test_model_id_cannot_escape_model_dir(self, client):
        resp = client.post("/v1/completions", json=body(model="../../etc"))
        assert resp.status_code == 503

    def test_overlong_prompt_is_400(self, client):
        resp = client.post("/v1/completions", json=body(prompt="a" * 600))
        assert resp.status_code == 400
        assert "context" in resp.json()["detail"]


class TestHealth:
    def test_healthz_lists_loaded_models(self, client):
        client.post("/v1/completions", json=body())
        payload = client.get("/healthz").json()
        assert payload["status"] == "ok"
        assert BASE_ID in payload["models"]


class _CountingModel:
    """Stand-in model that records how many completions run at once."""

    def __init__(self):
        self.lock = threading.Lock()
        self.active = 0
        self.peak = 0

    def complete(self, prompt, *, max_tokens, temperature):
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)
        time.sleep(0.05)
        with self.lock:
            self.active -= 1
        return Completion("ok", 1, 1)


class _StubRegistry:
    def __init__(self, model):
        self.model = model

    def resolve(self, model_id):
        return self.model

    def loaded_ids(self):
        return ["stub"]


class TestSlots:
    def test_generation_concurrency_capped(self):
        counting = _CountingModel()
        app = create_app(_StubRegistry(counting), max_slots=2)

        def hit():
            with TestClient(app) as local:
                assert local.post("/v1/completions", json=body(model="stub")).status_code == 200

        threads = [threading.Thread(target=hit) for _ in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert counting.peak == 2  # capped, yet actually concurrent

    def test_invalid_slot_count_rejected(self):
        with pytest.raises(ValueError, match="max_slots"):
            create_app(_StubRegistry(_CountingModel()), max_slots=0)
