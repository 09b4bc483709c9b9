"""
Parameter sweeps over simulation runs.

This module provides the SweepService, which runs one fresh engine per
configuration point (request rate, page size, feature subset, backend and
cache-distance pattern) under a shared seed and collects one matrix row per
point.
"""

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

from ..core.report import SimReport
from ..core.request import TraceRecord
from ..core.sim_config import EngineConfig, Pattern, WorkloadSpec
from ..core.transfer import GpuAssistBackend
from ..utils.profiles import hardware_profile
from .engine import SimulationEngine
from .metrics_service import MetricsService
from .workload_service import WorkloadService

logger = logging.getLogger(__name__)

ABLATION_FEATURES = ("deferral", "balanced", "bubble", "dedup", "io-backend")
DEFAULT_ABLATION = ("deferral", "balanced", "bubble", "io-backend")


@dataclass(frozen=True)
class SweepPoint:
    """
    One configuration of a sweep.

    Attributes:
        axes: Axis values identifying the point, written as matrix columns
        engine: Engine configuration of the point
        trace: Trace replayed at the point
    """

    axes: Dict[str, Any]
    engine: EngineConfig
    trace: List[TraceRecord] = field(default_factory=list)
    thinking_time: float = 0.0


def run_point(point: SweepPoint) -> SimReport:
    """Simulate one point in a fresh engine."""
    requests = WorkloadService().build_requests(point.trace, point.engine.seed, point.thinking_time)
    return SimulationEngine(point.engine).run(requests)


class SweepService:
    """
    Service for running sweeps.

    Args:
        jobs: Worker processes; points run sequentially when 1
    """

    def __init__(self, jobs: int = 1):
        if jobs < 1:
            raise ValueError("jobs must be at least 1")
        self.jobs = jobs
        self.workload_service = WorkloadService()
        self.metrics_service = MetricsService()

    def run_points(self, points: Sequence[SweepPoint]) -> List[Dict[str, Any]]:
        """Matrix rows of points, in point order."""
        if self.jobs > 1 and len(points) > 1:
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                reports = list(pool.map(run_point, points))
        else:
            reports = []
            for number, point in enumerate(points, start=1):
                logger.info("Sweep point %d/%d: %s", number, len(points), point.axes)
                reports.append(run_point(point))
        return [self.metrics_service.matrix_row(report, **point.axes) for point, report in zip(points, reports)]

    def sweep_rate(
        self,
        engine: EngineConfig,
        rates: Sequence[float],
        workload: Optional[WorkloadSpec] = None,
        trace: Optional[List[TraceRecord]] = None,
    ) -> List[Dict[str, Any]]:
        """
        One point per request rate.

        A workload is regenerated at each rate under its seed; a fixed trace
        has its arrival times rescaled to the target rate instead.
        """
        if (workload is None) == (trace is None):
            raise ValueError("sweep_rate needs exactly one of workload or trace")
        points = []
        for rate in rates:
            if rate <= 0:
                raise ValueError(f"rates must be positive, got {rate}")
            if workload is not None:
                points.append(
                    SweepPoint(
                        {"rate": rate},
                        engine,
                        self.workload_service.generate(replace(workload, rate=rate)),
                        workload.thinking_time,
                    )
                )
            else:
                points.append(SweepPoint({"rate": rate}, engine, rescale_arrivals(trace, rate)))
        return self.run_points(points)

    def sweep_page(
        self, engine: EngineConfig, trace: List[TraceRecord], sizes: Sequence[int], thinking_time: float = 0.0
    ) -> List[Dict[str, Any]]:
        """One point per page size."""
        return self.run_points(
            [SweepPoint({"page_size": size}, engine.with_page_size(size), trace, thinking_time) for size in sizes]
        )

    def ablate(
        self,
        engine: EngineConfig,
        trace: List[TraceRecord],
        features: Sequence[str] = DEFAULT_ABLATION,
        thinking_time: float = 0.0,
    ) -> List[Dict[str, Any]]:
        """
        One point per subset of features, from all disabled to all enabled.

        Features not named keep their configured setting.
        """
        unknown = [name for name in features if name not in ABLATION_FEATURES]
        if unknown:
            raise ValueError(f"Unknown feature(s): {', '.join(unknown)} (known: {', '.join(ABLATION_FEATURES)})")
        points = []
        for flags in itertools.product((False, True), repeat=len(features)):
            enabled = dict(zip(features, flags))
            points.append(SweepPoint(enabled, with_features(engine, enabled), trace, thinking_time))
        return self.run_points(points)

    def compare(
        self,
        engine: EngineConfig,
        trace: List[TraceRecord],
        backends: Sequence[str] = ("dma", "gpu", "oracle"),
        patterns: Sequence[Pattern] = (),
        thinking_time: float = 0.0,
    ) -> List[Dict[str, Any]]:
        """One point per backend, crossed with cache-distance patterns when given."""
        machine = hardware_profile(engine.profile)
        arranged = {pattern.value: self.workload_service.apply_pattern(trace, pattern, engine.seed) for pattern in patterns}
        points = []
        for backend in backends:
            configured = machine.with_backend(engine, machine.backend(backend))
            if not arranged:
                points.append(SweepPoint({"backend": backend}, configured, trace, thinking_time))
            for name, arranged_trace in arranged.items():
                points.append(SweepPoint({"backend": backend, "pattern": name}, configured, arranged_trace, thinking_time))
        return self.run_points(points)


def with_features(engine: EngineConfig, enabled: Dict[str, bool]) -> EngineConfig:
    """Engine configuration with the named features switched on or off."""
    flags = {
        "deferral": "deferral_enabled",
        "balanced": "balanced_batching_enabled",
        "bubble": "bubble_fill_enabled",
        "dedup": "dedup_enabled",
    }
    changes = {flags[name]: value for name, value in enabled.items() if name in flags}
    configured = engine.with_scheduler(**changes) if changes else engine
    if "io-backend" in enabled:
        machine = hardware_profile(engine.profile)
        if enabled["io-backend"]:
            backend = engine.backend if isinstance(engine.backend, GpuAssistBackend) else machine.gpu
        else:
            backend = machine.dma
        configured = machine.with_backend(configured, backend)
    return configured


def rescale_arrivals(trace: List[TraceRecord], rate: float) -> List[TraceRecord]:
    """Trace with arrival times scaled so requests arrive at rate per second."""
    if len(trace) < 2:
        return list(trace)
    first = min(record.arrival_s for record in trace)
    duration = max(record.arrival_s for record in trace) - first
    if duration <= 0:
        return list(trace)
    factor = (len(trace) - 1) / duration / rate
    return [replace(record, arrival_s=first + (record.arrival_s - first) * factor) for record in trace]
