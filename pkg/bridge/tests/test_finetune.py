"""Dataset reading and the adapter fine-tune path."""

from __future__ import annotations

import json

import pytest
from conftest import BASE_ID
from fastapi.testclient import TestClient

from loadbridge import (
    ADAPTER_CONFIG,
    ADAPTER_WEIGHTS,
    DatasetError,
    ModelRegistry,
    TuningConfig,
    create_app,
    finetune,
    read_dataset,
)
from loadbridge.cli import main


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) if isinstance(r, dict) else r for r in rows) + "\n")
    return path


def valid_row(**overrides) -> dict:
    row = {
        "format": "text",
        "input_text": "The electricity consumption of each day is as follows, 1,2kWh. "
        "What is the daily consumption of next week?",
        "target_text": "The electricity consumption of each day is as follows, 3,4kWh.",
        "expected_len": 2,
        "instance_ref": "x/y@z",
        "meta": {"step_label": "daily", "unit_label": "kWh"},
    }
    row.update(overrides)
    return row


class TestReadDataset:
    def test_reads_toolkit_export(self, dataset_dir):
        records = read_dataset(dataset_dir / "train_text.jsonl")
        assert len(records) >= 64
        assert all(r.prompt and r.target for r in records)

    def test_blank_lines_skipped(self, tmp_path):
        path = write_jsonl(tmp_path / "d.jsonl", [valid_row(), "", valid_row()])
        assert len(read_dataset(path)) == 2

    def test_problems_reported_per_line(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [
                valid_row(),
                "{not json",
                json.dumps({k: v for k, v in valid_row().items() if k != "target_text"}),
                valid_row(input_text=""),
            ],
        )
        with pytest.raises(DatasetError) as err:
            read_dataset(path)
        message = str(err.value)
        assert "line 2" in message and "not JSON" in message
        assert "line 3" in message and "target_text" in message
        assert "line 4" in message

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(DatasetError, match="no records"):
            read_dataset(path)


class TestFinetune:
    def test_smoke_on_64_records(self, train64, model_dir, tmp_path):
        out = tmp_path / "adapter"
        result = finetune(
            train64,
            BASE_ID,
            out,
            TuningConfig(epochs=2),
            registry=ModelRegistry(model_dir),
        )
        assert result.steps == 4  # 64 records / batch 32 x 2 epochs
        assert (out / ADAPTER_WEIGHTS).is_file()
        spec = json.loads((out / ADAPTER_CONFIG).read_text())
        assert spec["base_model"] == BASE_ID
        assert (spec["rank"], spec["alpha"], spec["dropout"]) == (8, 32.0, 0.1)
        assert len(spec["wrapped"]) == 8
        assert all(h["loss"] > 0 for h in result.history)

    def test_adapter_serves_and_diverges_from_base(self, train64, model_dir):
        registry = ModelRegistry(model_dir)
        adapter_dir = model_dir / "gpt2-tuned"
        # Train well past the smoke recipe: four steps at 5e-5 may not move
        # any greedy argmax on a random-init base, and this test is about
        # the adapter actually changing what gets served.
        config = TuningConfig(epochs=20, lr=1e-3)
        finetune(train64, BASE_ID, adapter_dir, config, registry=registry)

        prompt = read_dataset(train64)[0].prompt
        base = registry.resolve(BASE_ID)
        tuned = registry.resolve("gpt2-tuned")
        assert tuned.adapter is not None
        base_text = base.complete(prompt, max_tokens=24, temperature=0.0).text
        tuned_text = tuned.complete(prompt, max_tokens=24, temperature=0.0).text
        assert tuned_text != base_text

        client = TestClient(create_app(registry))
        resp = client.post(
            "/v1/completions",
            json={"model": "gpt2-tuned", "prompt": prompt, "max_tokens": 8, "temperature": 0.0},
        )
        assert resp.status_code == 200
        assert resp.json()["choices"][0]["text"]

    def test_base_model_unchanged_by_tuning(self, train64, model_dir):
        registry = ModelRegistry(model_dir)
        prompt = read_dataset(train64)[0].prompt
        before = registry.resolve(BASE_ID).complete(prompt, max_tokens=16, temperature=0.0).text
        finetune(
            train64,
            BASE_ID,
            model_dir / "gpt2-sidecar",
            TuningConfig(epochs=1),
            registry=registry,
        )
        after = registry.resolve(BASE_ID).complete(prompt, max_tokens=16, temperature=0.0).text
        assert before == after

    def test_record_over_model_context_rejected(self, tmp_path, model_dir):
        path = write_jsonl(tmp_path / "long.jsonl", [valid_row(input_text="a" * 600)])
        with pytest.raises(DatasetError, match="context"):
            finetune(path, BASE_ID, tmp_path / "out", registry=ModelRegistry(model_dir))


class TestCli:
    def test_finetune_writes_artifacts(self, train64, tmp_path, capsys):
        out = tmp_path / "adapter"
        rc = main(
            [
                "finetune",
                "--dataset",
                str(train64),
                "--model-id",
                BASE_ID,
                "--out",
                str(out),
                "--epochs",
                "2",
            ]
        )
        assert rc == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["steps"] == 4
        assert summary["wrapped_modules"] == 8
        assert 0 < summary["trainable_fraction"] < 1
        curve = (out / "curve.csv").read_text().splitlines()
        assert curve[0] == "step,loss"
        assert len(curve) == 1 + summary["steps"]
        assert json.loads(capsys.readouterr().out)["steps"] == 4

    def test_empty_dataset_is_reported(self, tmp_path, capsys):
        empty = tmp_path / "none.jsonl"
        empty.write_text("")
        rc = main(
            [
                "finetune",
                "--dataset",
                str(empty),
                "--model-id",
                BASE_ID,
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert rc == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "DatasetError"
        assert "no records" in err["detail"]

    def test_missing_dataset_file_is_reported(self, tmp_path, capsys):
        rc = main(
            [
                "finetune",
                "--dataset",
                str(tmp_path / "absent.jsonl"),
                "--model-id",
                BASE_ID,
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert rc == 2
        assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"
