"""
Main CLI entry point for the KV-tier simulator.

This module provides the main command-line interface: it loads the run
configuration and workload, dispatches the subcommand and maps errors onto
exit codes.
"""

import argparse
import logging
import os
import sys
import time
from dataclasses import replace
from typing import List, Optional, Tuple

from ..core.exceptions import (
    ConfigError,
    FatalSimulationError,
    KvTierError,
    TraceParseError,
    TraceValidationError,
    UnsupportedPatternError,
)
from ..core.request import TraceRecord
from ..parsers.config_parser import ConfigParser, RunConfig, default_run_config
from ..services.engine import SimulationEngine
from ..services.metrics_service import MetricsService
from ..services.sweep_service import SweepService
from ..services.workload_service import WorkloadService
from ..utils.config import config
from ..utils.profiles import hardware_profile, workload_profile
from .argument_parser import ArgumentError, parse_arguments

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_FATAL = 3
EXIT_INTERRUPTED = 130


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """
    Set up logging configuration.

    Args:
        level: Logging level
        log_file: Extra file handler target; empty for stdout only
    """
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    log_file = config.log_file if log_file is None else log_file
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Run configuration from --config or the hardware profile, with CLI overrides applied."""
    seed = args.seed
    if args.config:
        run_config = ConfigParser().parse_file(args.config, args.profile)
    else:
        run_config = default_run_config(args.profile or config.profile, args.backend or "gpu", config.seed)
    engine = run_config.engine
    workload = run_config.workload
    if args.backend:
        engine = replace(engine, backend=hardware_profile(engine.profile).backend(args.backend))
    if args.workload:
        workload = workload_profile(args.workload, seed=run_config.seed, max_inflight=engine.max_inflight)
    if seed is not None:
        engine = replace(engine, seed=seed)
        workload = replace(workload, seed=seed) if workload else None
    if args.pattern and workload is not None:
        workload = replace(workload, pattern=args.pattern)
    return RunConfig(engine=engine, workload=workload, seed=engine.seed)


def load_trace(
    args: argparse.Namespace, run_config: RunConfig, workload_service: WorkloadService
) -> Tuple[List[TraceRecord], float]:
    """
    The trace to simulate and the thinking time of its conversation rounds.

    Raises:
        ArgumentError: If neither a trace nor a workload is available
    """
    workload = run_config.workload
    thinking_time = args.thinking_time
    if args.trace:
        trace = workload_service.load_trace(args.trace)
        if args.pattern:
            trace = workload_service.apply_pattern(trace, args.pattern, run_config.seed)
        if thinking_time is None:
            thinking_time = workload.thinking_time if workload else 0.0
        return trace, thinking_time
    if workload is None:
        raise ArgumentError("No workload: give --trace, --workload or a [workload] config section")
    trace = workload_service.generate(workload)
    return trace, workload.thinking_time if thinking_time is None else thinking_time


def command_run(args: argparse.Namespace, run_config: RunConfig) -> int:
    workload_service = WorkloadService()
    trace, thinking_time = load_trace(args, run_config, workload_service)
    requests = workload_service.build_requests(trace, run_config.seed, thinking_time)
    report = SimulationEngine(run_config.engine).run(requests)
    paths = MetricsService().write_report(report, args.out)
    stats = report.aggregate
    logger.info(
        "Run complete: %d requests, mean TTFT %.4f s, p90 %.4f s, throughput %.2f tok/s, "
        "stall %.2f%%, hit rate %.2f%%",
        stats.requests, stats.mean_ttft, stats.p90_ttft, stats.throughput,
        100 * stats.stall_fraction, 100 * stats.hit_rate,
    )
    logger.info("Report: %s", paths["report"])
    return EXIT_OK


def command_generate(args: argparse.Namespace, run_config: RunConfig) -> int:
    workload_service = WorkloadService()
    trace, _ = load_trace(args, run_config, workload_service)
    path = os.path.join(args.out, "trace.jsonl")
    workload_service.write_trace(trace, path)
    logger.info("Trace summary: %s", workload_service.summarize(trace))
    return EXIT_OK


def command_sweep(args: argparse.Namespace, run_config: RunConfig) -> int:
    sweeps = SweepService(jobs=args.jobs)
    engine = run_config.engine
    if args.command == "sweep-rate":
        if args.trace:
            trace, _ = load_trace(args, run_config, sweeps.workload_service)
            rows = sweeps.sweep_rate(engine, args.rates, trace=trace)
        elif run_config.workload is not None:
            rows = sweeps.sweep_rate(engine, args.rates, workload=run_config.workload)
        else:
            raise ArgumentError("No workload: give --trace, --workload or a [workload] config section")
    else:
        trace, thinking_time = load_trace(args, run_config, sweeps.workload_service)
        if args.command == "sweep-page":
            rows = sweeps.sweep_page(engine, trace, args.sizes, thinking_time)
        elif args.command == "ablate":
            rows = sweeps.ablate(engine, trace, args.features, thinking_time)
        else:
            rows = sweeps.compare(engine, trace, args.backends, args.patterns, thinking_time)
    sweeps.metrics_service.write_matrix(rows, os.path.join(args.out, "matrix.csv"))
    return EXIT_OK


COMMANDS = {
    "run": command_run,
    "generate": command_generate,
    "sweep-rate": command_sweep,
    "sweep-page": command_sweep,
    "ablate": command_sweep,
    "compare": command_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point for the CLI.

    Returns:
        Exit code: 0 on success, 2 for bad input, 3 when the simulation
        cannot proceed, 130 on interrupt, 1 otherwise
    """
    try:
        args = parse_arguments(argv)
        setup_logging(args.log_level)
        start_time = time.time()

        run_config = load_run_config(args)
        status = COMMANDS[args.command](args, run_config)

        logger.info("%s completed in %.1f seconds", args.command, time.time() - start_time)
        return status

    except (ArgumentError, ConfigError, FileNotFoundError) as e:
        logger.error(f"Argument error: {e}")
        return EXIT_USAGE
    except (TraceParseError, TraceValidationError, UnsupportedPatternError) as e:
        logger.error(f"Trace error: {e}")
        return EXIT_USAGE
    except FatalSimulationError as e:
        logger.error(f"Simulation failed: {e}")
        return EXIT_FATAL
    except KvTierError as e:
        logger.error(f"Simulation error: {e}")
        return EXIT_FATAL
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_INTERRUPTED
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
