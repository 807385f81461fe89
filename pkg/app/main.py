"""
Stationary Regime Lab - command line
Runs learning experiments on finite-memory POMDP reductions and checks them
against the exact stationary regime oracle.
"""
import argparse
import asyncio
import logging
import sys
from typing import Optional, Sequence

from app.core.config import settings
from app.core.errors import LabError, ValidationError
from app.core.logging import setup_logging
from app.schemas.experiment import load_experiment
from app.schemas.run import EXIT_MISMATCH, EXIT_OK
from app.services.harness import ExperimentService, compare_runs
from app.utils.files import dumps_json


logger = logging.getLogger("app")


def _seed_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--seeds expects a comma separated list of integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app", description=settings.APP_NAME)
    parser.add_argument("--log-level", default=None, help=f"logging level (default {settings.LOG_LEVEL})")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "run an experiment: oracle, seeds, reports"),
        ("oracle-only", "compute the seed-free oracle outputs and bound reports only"),
    ):
        command = commands.add_parser(name, help=help_text)
        command.add_argument("--config", required=True, help="experiment TOML file")
        command.add_argument("--out", default=None, help="artifact root (default from config or settings)")
        command.add_argument("--seeds", type=_seed_list, default=None, help="comma separated seeds overriding the config")
        command.add_argument("--threads", type=int, default=None, help="seeds run concurrently")

    compare = commands.add_parser("compare", help="diff two run directories")
    compare.add_argument("dir_a")
    compare.add_argument("dir_b")
    compare.add_argument("--rtol", type=float, default=None)
    compare.add_argument("--atol", type=float, default=None)
    return parser


def _run(args: argparse.Namespace) -> int:
    config, base_dir = load_experiment(args.config)
    service = ExperimentService(config, base_dir, args.threads)
    if args.seeds is not None:
        if not args.seeds:
            raise ValidationError("--seeds needs at least one seed")
        service = service.with_seeds(args.seeds)
    summary, run_dir = asyncio.run(service.run(args.out, oracle_only=args.command == "oracle-only"))
    print(run_dir / "summary.md")
    return summary.exit_code


def _compare(args: argparse.Namespace) -> int:
    report = compare_runs(args.dir_a, args.dir_b, args.rtol, args.atol)
    sys.stdout.write(dumps_json(report))
    return EXIT_OK if report.clean else EXIT_MISMATCH


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        if args.command == "compare":
            return _compare(args)
        return _run(args)
    except LabError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.detail)
        if settings.DEBUG:
            raise
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
