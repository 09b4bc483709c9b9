"""
Core value types and entities of the KV-tier simulator.

This package contains the tiers, pages, requests, batch plans, transfer specs,
tree nodes and report rows used throughout the application.
"""

from .tier import TierId, Layout, TransientMark, PageRef, KvGeometry, TierSpec
from .transfer import LinkSpec, DmaCopyBackend, GpuAssistBackend, OracleBackend, TransferJob
from .request import Request, RequestState, TraceRecord
from .batch import BatchPlan, MemberPlan, DecodeSlot, BatchEstimate
from .hiradix_node import HiRadixNode, MatchResult, EvictionPlan, Writeback
from .report import RequestRecord, BatchRecord, AggregateStats, SimReport
from .sim_config import (
    SchedulerConfig,
    ComputeModel,
    EngineConfig,
    WorkloadSpec,
    LengthDistribution,
    Pattern,
)

__all__ = [
    "TierId",
    "Layout",
    "TransientMark",
    "PageRef",
    "KvGeometry",
    "TierSpec",
    "LinkSpec",
    "DmaCopyBackend",
    "GpuAssistBackend",
    "OracleBackend",
    "TransferJob",
    "Request",
    "RequestState",
    "TraceRecord",
    "BatchPlan",
    "MemberPlan",
    "DecodeSlot",
    "BatchEstimate",
    "HiRadixNode",
    "MatchResult",
    "EvictionPlan",
    "Writeback",
    "RequestRecord",
    "BatchRecord",
    "AggregateStats",
    "SimReport",
    "SchedulerConfig",
    "ComputeModel",
    "EngineConfig",
    "WorkloadSpec",
    "LengthDistribution",
    "Pattern",
]
