"""
Argument parser for the KV-tier simulator CLI.

This module provides argument parsing and validation for the command-line interface.
"""

import argparse
import logging
from typing import List, Optional

from ..services.sweep_service import ABLATION_FEATURES, DEFAULT_ABLATION
from ..utils.config import config
from ..utils.validation import (
    BACKEND_KINDS,
    validate_choices,
    validate_file_path,
    validate_float_list,
    validate_int_list,
    validate_output_directory,
    validate_patterns,
    validate_profile,
    validate_seed,
    validate_workload_profile,
)

logger = logging.getLogger(__name__)

COMMANDS = ("run", "sweep-rate", "sweep-page", "ablate", "compare", "generate")


class ArgumentError(Exception):
    """Custom exception for argument validation errors."""
    pass


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="Run configuration file (INI, config_version = 1)")
    common.add_argument("--trace", type=str, default=None, help="JSON-lines trace to replay")
    common.add_argument(
        "--workload", type=str, default=None,
        help="Workload profile to generate instead of a trace: loogle, narrativeqa, reviewmt, sharegpt-like",
    )
    common.add_argument("--out", type=str, default=config.output_directory, help=f"Output directory. Default: {config.output_directory}")
    common.add_argument("--seed", type=int, default=None, help=f"Seed for workload and engine. Default: {config.seed}")
    common.add_argument(
        "--profile", type=str, default=None,
        help=f"Hardware profile: h200-pcie5 or gh200-nvlink. Default: {config.profile}",
    )
    common.add_argument("--pattern", type=str, default=None, help="Cache-distance pattern: min, shuffle or max")
    common.add_argument("--backend", type=str, default=None, choices=BACKEND_KINDS, help="Device/Host transfer backend")
    common.add_argument("--thinking-time", type=float, default=None, help="Seconds between a round finishing and the next arriving")
    common.add_argument("--jobs", type=int, default=1, help="Worker processes for sweeps. Default: 1")
    common.add_argument(
        "--log-level",
        type=str,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=config.log_level.upper(),
        help="Set logging level. Default: KVTIER_LOG or INFO",
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="kvtier-sim",
        description="Simulate LLM serving over a hierarchical KV cache (device, host and disk tiers).",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Replay a trace with a run configuration
  kvtier-sim run --config run.ini --trace trace.jsonl --out results/

  # Generate a LooGLE-like trace
  kvtier-sim generate --workload loogle --seed 7 --out traces/

  # Page-size sweep under the copy-engine backend
  kvtier-sim sweep-page --config run.ini --trace trace.jsonl --backend dma --sizes 1,16,32,64,256,1024

  # Feature ablation on a max-distance arrangement
  kvtier-sim ablate --workload loogle --pattern max --features deferral,balanced,bubble,io-backend
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("run", parents=[common], help="Run one simulation")
    subparsers.add_parser("generate", parents=[common], help="Write a trace generated from a workload")

    rate = subparsers.add_parser("sweep-rate", parents=[common], help="Sweep the request rate")
    rate.add_argument("--rates", type=str, required=True, help="Comma-separated request rates (requests/second)")

    page = subparsers.add_parser("sweep-page", parents=[common], help="Sweep the page size")
    page.add_argument("--sizes", type=str, default="1,16,32,64,256,1024", help="Comma-separated page sizes in tokens")

    ablate = subparsers.add_parser("ablate", parents=[common], help="Run every subset of features")
    ablate.add_argument(
        "--features", type=str, default=",".join(DEFAULT_ABLATION),
        help=f"Comma-separated features from {', '.join(ABLATION_FEATURES)}",
    )

    compare = subparsers.add_parser("compare", parents=[common], help="Compare backends and patterns")
    compare.add_argument("--backends", type=str, default=",".join(BACKEND_KINDS), help="Comma-separated backends")
    compare.add_argument("--patterns", type=str, default="", help="Comma-separated patterns to cross with backends")
    return parser


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse and validate command-line arguments.

    Args:
        argv: Arguments, defaulting to sys.argv

    Returns:
        Parsed arguments with list options converted to lists

    Raises:
        ArgumentError: If arguments are invalid
    """
    args = build_parser().parse_args(argv)
    _validate_arguments(args)
    return args


def _validate_arguments(args: argparse.Namespace) -> None:
    """
    Validate parsed arguments.

    Raises:
        ArgumentError: If arguments are invalid
    """
    try:
        if args.config and not validate_file_path(args.config):
            raise ArgumentError(f"Config file not found: {args.config}")
        if args.trace and not validate_file_path(args.trace):
            raise ArgumentError(f"Trace file not found: {args.trace}")
        if args.trace and args.workload:
            raise ArgumentError("Give --trace or --workload, not both")
        if args.command == "generate" and args.trace:
            raise ArgumentError("generate writes a trace; it does not read one")

        if args.profile:
            args.profile = validate_profile(args.profile)
        if args.workload:
            args.workload = validate_workload_profile(args.workload)
        if args.seed is not None:
            validate_seed(args.seed)
        if args.pattern:
            args.pattern = validate_patterns(args.pattern)[0]
        if args.thinking_time is not None and args.thinking_time < 0:
            raise ArgumentError("--thinking-time must be non-negative")
        if args.jobs < 1:
            raise ArgumentError("--jobs must be at least 1")

        if args.command == "sweep-rate":
            args.rates = validate_float_list(args.rates, "rates")
        elif args.command == "sweep-page":
            args.sizes = validate_int_list(args.sizes, "sizes")
        elif args.command == "ablate":
            args.features = validate_choices(args.features, ABLATION_FEATURES, "features")
        elif args.command == "compare":
            args.backends = validate_choices(args.backends, BACKEND_KINDS, "backends")
            args.patterns = validate_patterns(args.patterns) if args.patterns else []

        args.out = validate_output_directory(args.out)

    except ValueError as e:
        raise ArgumentError(str(e))
