"""Command-line entry points: build, eval, train, report.

Every run writes its artifacts under a content-addressed directory named
by the manifest hash, so identical configurations land in identical
places and deterministic backends reproduce reports byte for byte.
Errors leave as JSON on stderr with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .backends import EchoOracle, FaultInjector, RemoteBackend, ToyLmBackend
from .baselines import DLinearForecaster, SeasonalNaiveForecaster
from .codec import encode
from .core import (
    LoadcastError,
    PromptFormat,
    Resolution,
    RunConfig,
    WindowSpec,
    make_instances,
)
from .data import export_jsonl, import_jsonl, ingest_csv, split_by_months, synthesize_series
from .harness import (
    RunManifest,
    hash_config,
    hash_file,
    outcome_log_lines,
    package_version,
    run_eval,
)
from .metrics import MetricsReport, ReportStyle, render_comparison, render_report

_SYNTH_DEFAULTS = {
    Resolution.DAILY: (3695.10, 2334.11),
    Resolution.HOURLY: (1184.82, 192.26),
}


def _ints(text: str, n: int, what: str) -> tuple[int, ...]:
    parts = tuple(int(p) for p in text.split(","))
    if len(parts) != n:
        raise ValueError(f"{what} needs {n} comma-separated integers")
    return parts


def _add_source_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--csv", help="CSV file with one timestamped value column")
    parser.add_argument("--timestamp-col", default="datetime")
    parser.add_argument("--value-col", default="value")
    parser.add_argument("--forward-fill", action="store_true",
                        help="carry the previous value across gaps instead of failing")
    parser.add_argument("--synthetic", action="store_true",
                        help="generate a synthetic series instead of reading a CSV")
    parser.add_argument("--n-steps", type=int, default=1100)
    parser.add_argument("--mean", type=float)
    parser.add_argument("--std", type=float)
    parser.add_argument("--resolution", choices=["daily", "hourly"], default="daily")
    parser.add_argument("--seed", type=int, default=0)


def _load_series(args):
    resolution = Resolution(args.resolution)
    if args.csv:
        return ingest_csv(
            args.csv, args.timestamp_col, args.value_col, resolution,
            forward_fill=args.forward_fill,
        )
    default_mean, default_std = _SYNTH_DEFAULTS[resolution]
    return synthesize_series(
        args.seed, args.n_steps, resolution,
        args.mean if args.mean is not None else default_mean,
        args.std if args.std is not None else default_std,
    )


def _window(args, resolution: Resolution) -> WindowSpec:
    if args.window:
        input_len, output_len, obs_len = _ints(args.window, 3, "--window")
        return WindowSpec(input_len=input_len, output_len=output_len, obs_len=obs_len)
    return WindowSpec.for_resolution(resolution)


def cmd_build(args) -> int:
    resolution = Resolution(args.resolution)
    series = _load_series(args)
    window = _window(args, resolution)
    splits = dict(zip(
        ("train", "val", "test"),
        split_by_months(series, *_ints(args.split, 3, "--split")),
    ))
    formats = [PromptFormat(f) for f in args.formats.split(",")]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    for split_name, piece in splits.items():
        instances = make_instances(piece, window)
        for fmt in formats:
            cfg = RunConfig(
                window=window, format=fmt, resolution=resolution,
                precision=args.precision, seed=args.seed,
            )
            records = [encode(inst, cfg) for inst in instances]
            path = out / f"{split_name}_{fmt.value}.jsonl"
            export_jsonl(records, path)
            files[path.name] = hash_file(path)

    manifest = RunManifest(
        seed=args.seed,
        config={
            "command": "build",
            "resolution": resolution.value,
            "window": [window.input_len, window.output_len, window.obs_len],
            "split": list(_ints(args.split, 3, "--split")),
            "formats": [f.value for f in formats],
            "precision": args.precision,
            "source": args.csv or "synthetic",
        },
        dataset_hash=hash_config(files),
        backend_id="none",
        version=package_version(),
    )
    (out / "manifest.json").write_text(manifest.to_json())
    print(json.dumps({"out": str(out), "files": sorted(files)}, indent=2))
    return 0


def _build_backend(args, records):
    name = args.backend
    if name == "echo":
        return EchoOracle.from_records(records)
    if name.startswith("fault:"):
        inner_name = name.split(":", 1)[1]
        if inner_name != "echo":
            raise ValueError("fault injection wraps only the echo backend")
        fmt = records[0].format if records else PromptFormat.TEXT
        expected = records[0].expected_len if records else 7
        return FaultInjector(
            EchoOracle.from_records(records),
            rate=args.fault_rate,
            seed=args.seed,
            format=fmt,
            expected_len=expected,
            kinds=tuple(args.fault_kinds.split(",")),
            schedule=args.fault_schedule,
        )
    if name == "toy":
        if not args.checkpoint:
            raise ValueError("--backend toy needs --checkpoint")
        automaton = None
        if args.constrained:
            from .toylm import TemplateAutomaton

            first = records[0]
            automaton = TemplateAutomaton.for_format(
                first.format, first.expected_len,
                resolution=first.step_label, precision=args.precision,
                unit_label=first.unit_label,
            )
        return ToyLmBackend.from_checkpoint(args.checkpoint, automaton=automaton)
    if name == "remote":
        return RemoteBackend()
    raise ValueError(f"unknown backend {name!r}")


def cmd_eval(args) -> int:
    records = import_jsonl(args.dataset)
    if not records:
        raise ValueError(f"dataset {args.dataset} is empty")
    backend = _build_backend(args, records)

    manifest = RunManifest(
        seed=args.seed,
        config={
            "command": "eval",
            "backend": args.backend,
            "fault_rate": args.fault_rate,
            "fault_schedule": args.fault_schedule,
            "fault_kinds": args.fault_kinds,
            "constrained": args.constrained,
            "ets_tail_pad": args.ets_tail_pad,
            "workers": args.workers,
            "precision": args.precision,
        },
        dataset_hash=hash_file(args.dataset),
        backend_id=args.backend,
        version=package_version(),
    )
    run_dir = Path(args.out) / manifest.run_key
    run_dir.mkdir(parents=True, exist_ok=True)

    result = run_eval(
        records, backend, workers=args.workers, ets_tail_pad=args.ets_tail_pad
    )
    (run_dir / "manifest.json").write_text(manifest.to_json())
    (run_dir / "report.json").write_text(render_report(result.report, ReportStyle.JSON))
    (run_dir / "report.md").write_text(render_report(result.report, ReportStyle.MARKDOWN))
    (run_dir / "outcomes.jsonl").write_text(
        "\n".join(outcome_log_lines(records, result.outcomes, result.completions)) + "\n"
    )
    _write_forecast_csv(run_dir / "forecasts.csv", records, result.outcomes)

    print(json.dumps({
        "run_dir": str(run_dir),
        "hallucination_rate": result.report.hallucination_rate,
        "mae": result.report.mae,
        "rmse": result.report.rmse,
    }, indent=2))
    return 0


def _write_forecast_csv(path, records, outcomes) -> None:
    """Per-step predicted-vs-truth rows, ready for plotting."""
    from .harness import target_values

    lines = ["instance_ref,step,truth,predicted"]
    for record, outcome in zip(records, outcomes):
        truth = target_values(record)
        for step, (want, got) in enumerate(zip(truth, outcome.repaired), start=1):
            lines.append(f"{record.instance_ref},{step},{want:g},{got:g}")
    Path(path).write_text("\n".join(lines) + "\n")


def _instances_to_arrays(instances):
    X = np.array([inst.x for inst in instances])
    y = np.array([inst.y for inst in instances])
    return X, y


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.model == "dlinear":
        resolution = Resolution(args.resolution)
        series = _load_series(args)
        window = _window(args, resolution)
        train_s, val_s, test_s = split_by_months(
            series, *_ints(args.split, 3, "--split")
        )
        X_train, y_train = _instances_to_arrays(make_instances(train_s, window))
        X_val, y_val = _instances_to_arrays(make_instances(val_s, window))
        X_test, y_test = _instances_to_arrays(make_instances(test_s, window))

        model = DLinearForecaster(
            kernel_size=args.kernel_size,
            learning_rate=args.lr if args.lr is not None else 0.001,
            batch_size=args.batch_size, max_epochs=args.max_epochs,
            patience=args.patience, seed=args.seed,
        )
        model.fit(X_train, y_train, X_val=X_val, y_val=y_val)
        prediction = model.predict(X_test)
        mae = float(np.mean(np.abs(prediction - y_test)))
        rmse = float(np.sqrt(np.mean((prediction - y_test) ** 2)))

        baseline = SeasonalNaiveForecaster(
            period=7 if resolution is Resolution.DAILY else 24
        ).fit(X_train, y_train)
        naive = baseline.predict(X_test)
        naive_mae = float(np.mean(np.abs(naive - y_test)))

        model.save(out / "dlinear.json")
        _write_curve(out / "curve.csv", model.history_)
        summary = {
            "model": "dlinear", "test_mae": mae, "test_rmse": rmse,
            "seasonal_naive_mae": naive_mae, "epochs": len(model.history_),
        }
    elif args.model == "toylm":
        from .toylm import ToyLmConfig, save_checkpoint, train

        if not args.dataset:
            raise ValueError("--model toylm needs --dataset")
        records = import_jsonl(args.dataset)
        cfg = ToyLmConfig(
            d_model=args.d_model, n_heads=args.n_heads, n_layers=args.n_layers,
            context_len=args.context_len, mode=args.mode,
            batch_size=args.batch_size, seed=args.seed,
        )
        result = train(
            records, cfg, max_steps=args.steps,
            target_accuracy=args.target_accuracy, lr=args.lr,
        )
        save_checkpoint(out / "toylm.npz", result.params, cfg)
        _write_curve(out / "curve.csv", result.history)
        summary = {
            "model": "toylm", "steps": result.steps,
            "final_loss": result.final_loss, "token_accuracy": result.accuracy,
        }
    else:
        raise ValueError(f"unknown model {args.model!r}")

    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _write_curve(path, history) -> None:
    if not history:
        Path(path).write_text("step\n")
        return
    keys = sorted({k for row in history for k in row})
    lines = [",".join(keys)]
    for row in history:
        lines.append(",".join(str(row.get(k, "")) for k in keys))
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_report(args) -> int:
    named = {}
    for path in args.reports:
        p = Path(path)
        report = MetricsReport.from_dict(json.loads(p.read_text()))
        name = p.parent.name if p.parent.name not in ("", ".") else p.stem
        named[name] = report
    print(render_comparison(named, ReportStyle(args.style)), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadcast",
        description="Prompt-based load forecasting pipeline and baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="serialize a series into prompt datasets")
    _add_source_flags(p_build)
    p_build.add_argument("--window", help="input,output,observation lengths")
    p_build.add_argument("--split", default="24,6,6", help="train,val,test months")
    p_build.add_argument("--formats", default="text,ts,ets")
    p_build.add_argument("--precision", type=int, default=0)
    p_build.add_argument("--out", required=True)
    p_build.set_defaults(fn=cmd_build)

    p_eval = sub.add_parser("eval", help="generate, parse, and score one dataset")
    p_eval.add_argument("--dataset", required=True, help="JSONL prompt dataset")
    p_eval.add_argument("--backend", default="echo",
                        help="echo | fault:echo | toy | remote")
    p_eval.add_argument("--fault-rate", type=float, default=0.0)
    p_eval.add_argument("--fault-schedule", choices=["bernoulli", "paced"],
                        default="paced")
    p_eval.add_argument("--fault-kinds", default="drop")
    p_eval.add_argument("--checkpoint", help="toy backend checkpoint (.npz)")
    p_eval.add_argument("--constrained", action="store_true",
                        help="mask toy-backend decoding with the target template")
    p_eval.add_argument("--ets-tail-pad", action="store_true",
                        help="repair clause-format outputs position-blind")
    p_eval.add_argument("--precision", type=int, default=0)
    p_eval.add_argument("--workers", type=int, default=4)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(fn=cmd_eval)

    p_train = sub.add_parser("train", help="fit a baseline or the toy transformer")
    p_train.add_argument("--model", choices=["dlinear", "toylm"], required=True)
    _add_source_flags(p_train)
    p_train.add_argument("--window", help="input,output,observation lengths")
    p_train.add_argument("--split", default="24,6,6")
    p_train.add_argument("--dataset", help="JSONL prompts (toylm)")
    p_train.add_argument("--kernel-size", type=int, default=25)
    p_train.add_argument("--lr", type=float,
                         help="default 0.001 for dlinear, 5e-5 for toylm")
    p_train.add_argument("--batch-size", type=int, default=32)
    p_train.add_argument("--max-epochs", type=int, default=50)
    p_train.add_argument("--patience", type=int, default=5)
    p_train.add_argument("--d-model", type=int, default=64)
    p_train.add_argument("--n-heads", type=int, default=4)
    p_train.add_argument("--n-layers", type=int, default=2)
    p_train.add_argument("--context-len", type=int, default=1024)
    p_train.add_argument("--mode", choices=["full", "lora"], default="full")
    p_train.add_argument("--steps", type=int, default=2000)
    p_train.add_argument("--target-accuracy", type=float)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(fn=cmd_train)

    p_report = sub.add_parser("report", help="merge eval reports into one table")
    p_report.add_argument("reports", nargs="+", help="report.json paths")
    p_report.add_argument("--style", choices=["markdown", "csv", "json"],
                          default="markdown")
    p_report.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (LoadcastError, OSError, ValueError, KeyError) as exc:
        print(json.dumps({
            "error": type(exc).__name__,
            "message": str(exc),
        }), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
