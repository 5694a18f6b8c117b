"""Command-line entry point.

    llmtopics --config cfg.json [--backend KIND] [--seed N] <stage>

Stages: ingest, generate, collapse, represent, evaluate,
intrude make | intrude score --answers FILE, and run --all.

Exit codes: 0 success, 2 config error, 3 dependency error,
4 backend error, 5 parse-exhaustion error.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .errors import LlmTopicsError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llmtopics", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="pipeline config file (JSON)")
    parser.add_argument(
        "--backend",
        choices=pipeline.BACKEND_KINDS,
        default=None,
        help="override the configured backend kind",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")

    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in ("ingest", "generate", "collapse", "represent", "evaluate"):
        sub.add_parser(stage)
    run = sub.add_parser("run")
    run.add_argument("--all", action="store_true", required=True, help="run every stage in order")
    intrude = sub.add_parser("intrude")
    intrude.add_argument("mode", choices=("make", "score"))
    intrude.add_argument("--answers", help="answer sheet (JSON task_id -> chosen index)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = pipeline.validate_config(
            args.config, overrides={"backend_kind": args.backend, "seed": args.seed}
        )
        if args.stage == "ingest":
            produced = [pipeline.stage_ingest(cfg)]
        elif args.stage == "generate":
            produced = [pipeline.stage_generate(cfg)]
        elif args.stage == "collapse":
            produced = [pipeline.stage_collapse(cfg)]
        elif args.stage == "represent":
            produced = [pipeline.stage_represent(cfg)]
        elif args.stage == "evaluate":
            produced = [pipeline.stage_evaluate(cfg)]
        elif args.stage == "run":
            produced = pipeline.run_all(cfg)
        else:  # intrude
            if args.mode == "make":
                produced = list(pipeline.stage_intrude_make(cfg))
            else:
                if not args.answers:
                    print("intrude score requires --answers", file=sys.stderr)
                    return 2
                produced = [pipeline.stage_intrude_score(cfg, args.answers)]
    except LlmTopicsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in produced:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
