"""Command-line entry point: ``cohort-sieve <subcommand> --config <path>``.

Exit status is 0 on success, 1 when the config or inputs fail validation
and 2 when a stage fails at run time.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .pipeline import STAGE_FUNCTIONS, STAGES, StageError, Workspace, run_pipeline
from .synth import generate_corpus

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

# corpus inputs each subcommand reads
_NEEDS = {
    "ingest": ("train", "test"),
    "mine-sections": ("train",),
    "train-embeddings": ("train",),
    "expand-variants": (),
    "build-silver": ("unlabeled",),
    "train": ("train",),
    "predict": ("test",),
    "score": ("gold_test",),
    "pipeline": ("train", "test", "gold_train", "gold_test", "unlabeled"),
    "generate": (),
}

logger = logging.getLogger("cohort_sieve")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cohort-sieve", description="Eligibility-criteria pipeline for patient cohorts.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("pipeline", "generate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI pipeline configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None,
                       help="output directory (for generate: corpus directory)")
    return parser


def _generate(cfg, out) -> None:
    root = out or cfg.corpus["train"].parent
    counts = generate_corpus(root, seed=cfg.sub_seed("generate"), **cfg.generate)
    print(f"wrote {counts['train']} train, {counts['test']} test, {counts['unlabeled']} unlabeled patients to {root}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    generating = args.command == "generate"
    try:
        cfg = load_config(args.config, seed=args.seed, output=None if generating else args.out,
                          check_corpus=_NEEDS[args.command])
        if generating and args.out is None and "train" not in cfg.corpus:
            raise ConfigError(["[pipeline] train is required to locate the corpus directory (or pass --out)"])
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_INVALID

    try:
        if generating:
            _generate(cfg, args.out)
            return EXIT_OK
        ws = Workspace(cfg)
        if args.command == "pipeline":
            results = run_pipeline(ws)
            print(results["score"][1], end="")
        else:
            result = STAGE_FUNCTIONS[args.command](ws)
            if args.command == "score":
                print(result[1], end="")
    except (StageError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # report, never traceback, at the process boundary
        logger.debug("unexpected failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
