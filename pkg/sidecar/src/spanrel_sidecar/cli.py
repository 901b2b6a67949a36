"""Service entry point; configuration via flags and SPANREL_MODEL."""

from __future__ import annotations

import argparse
import os
import sys

from .model import ModelError
from .server import SidecarConfig, build_app


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spanrel-sidecar",
        description="Extractive QA predictor service speaking the spanrel wire protocol.",
    )
    parser.add_argument(
        "--model",
        default=os.environ.get("SPANREL_MODEL", "builtin:overlap"),
        help="model identifier: builtin:overlap or a local transformers checkpoint"
        " (env: SPANREL_MODEL)",
    )
    parser.add_argument("--port", type=int, default=8140)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--max-batch", type=int, default=32)
    parser.add_argument("--device", default="cpu", help="device hint for model backends")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = SidecarConfig(
            model=args.model, port=args.port, max_batch=args.max_batch, device=args.device
        )
        app = build_app(config)
    except (ModelError, ValueError, OSError) as e:
        print(f"spanrel-sidecar: {e}", file=sys.stderr)
        return 1

    import uvicorn

    uvicorn.run(app, host=args.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
