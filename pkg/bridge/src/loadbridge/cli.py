"""Command line entry points: serve models, fine-tune adapters.

Model weights resolve through the BRIDGE_MODEL_DIR environment variable
(one subdirectory per model id) with the hub as fallback; there is no
path flag, so run artifacts never embed machine-local layout.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .finetune import TuningConfig, finetune
from .registry import BridgeError, ModelRegistry


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    registry = ModelRegistry()
    registry.resolve(args.model_id)  # fail before binding the port
    app = create_app(registry, max_slots=args.slots)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_finetune(args: argparse.Namespace) -> int:
    config = TuningConfig(
        rank=args.rank,
        alpha=args.alpha,
        dropout=args.dropout,
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
    )
    result = finetune(args.dataset, args.model_id, args.out, config)
    out = Path(args.out)
    with open(out / "curve.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for row in result.history:
            writer.writerow([row["step"], f"{row['loss']:.6f}"])
    summary = {
        "adapter_dir": str(result.adapter_dir),
        "base_model": args.model_id,
        "steps": result.steps,
        "final_loss": result.final_loss,
        "trainable_fraction": result.trainable_fraction,
        "wrapped_modules": len(result.wrapped),
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loadbridge")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="expose a model over the completions contract")
    p_serve.add_argument("--model-id", required=True, help="model to preload and serve")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8001)
    p_serve.add_argument("--slots", type=int, default=2, help="max concurrent generations")
    p_serve.set_defaults(func=_cmd_serve)

    p_tune = sub.add_parser("finetune", help="train low-rank adapters on a prompt dataset")
    p_tune.add_argument("--dataset", required=True, help="JSONL prompt dataset")
    p_tune.add_argument("--model-id", required=True, help="base model to adapt")
    p_tune.add_argument("--out", required=True, help="adapter output directory")
    p_tune.add_argument("--rank", type=int, default=8)
    p_tune.add_argument("--alpha", type=float, default=32.0)
    p_tune.add_argument("--dropout", type=float, default=0.1)
    p_tune.add_argument("--lr", type=float, default=5e-5)
    p_tune.add_argument("--batch-size", type=int, default=32)
    p_tune.add_argument("--epochs", type=int, default=1)
    p_tune.add_argument("--seed", type=int, default=0)
    p_tune.set_defaults(func=_cmd_finetune)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (BridgeError, OSError, ValueError) as exc:
        json.dump({"error": type(exc).__name__, "detail": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
