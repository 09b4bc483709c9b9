"""
Services for the KV-tier simulator.

This package contains the simulation logic: the tiered radix tree, tier
storage, the I/O model, the scheduler, the event-driven engine, workload
generation, metrics aggregation and sweeps.
"""

from .hiradix_tree import HiRadixTree, TransientEvent
from .tier_store import TierStore
from .scheduler import Scheduler
from .engine import SimulationEngine
from .metrics_service import MetricsService
from .workload_service import WorkloadService
from .sweep_service import SweepService

__all__ = [
    "HiRadixTree",
    "TransientEvent",
    "TierStore",
    "Scheduler",
    "SimulationEngine",
    "MetricsService",
    "WorkloadService",
    "SweepService",
]
