"""
Simulation configuration value types.

These frozen dataclasses are what the services consume. The run config file
parser validates user input and builds them; tests build them directly.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple

from .tier import KvGeometry, TierId, TierSpec
from .transfer import DmaCopyBackend, GpuAssistBackend, IoBackendSpec, LinkSpec


@dataclass(frozen=True)
class SchedulerConfig:
    """
    Knobs of the cache-aware scheduler.

    Attributes:
        deferral_threshold: Transient-matched tokens above which a request is
            deferred; also the bundle-hit overlap threshold
        loading_bound_ratio: Host-load/compute ratio above which a batch is
            loading-bound
        max_batch_tokens: Compute-token budget of a prefill batch
        bubble_fill_enabled: Run decode steps during loading stalls
        deferral_enabled: Defer requests that hit in-progress computation
        balanced_batching_enabled: Form batches per balanced formation, else FIFO
        dedup_enabled: Compute a shared uncached prefix once per batch
    """

    deferral_threshold: int = 100
    loading_bound_ratio: float = 100.0
    max_batch_tokens: int = 16384
    bubble_fill_enabled: bool = True
    deferral_enabled: bool = True
    balanced_batching_enabled: bool = True
    dedup_enabled: bool = True

    def __post_init__(self):
        if self.deferral_threshold <= 0:
            raise ValueError("deferral_threshold must be positive")
        if self.loading_bound_ratio <= 0:
            raise ValueError("loading_bound_ratio must be positive")
        if self.max_batch_tokens <= 0:
            raise ValueError("max_batch_tokens must be positive")


@dataclass(frozen=True)
class ComputeModel:
    """
    Analytical prefill/decode cost model.

    Attributes:
        prefill_token_cost: Seconds per prefilled token (dense term)
        prefill_attn_cost: Seconds per (new token x attended token)
        decode_step_base: Fixed seconds per decode step
        decode_step_per_token: Seconds per active KV token in a decode step
        num_layers: Transformer layers
    """

    prefill_token_cost: float = 2.5e-4
    prefill_attn_cost: float = 1e-9
    decode_step_base: float = 1e-3
    decode_step_per_token: float = 1e-7
    num_layers: int = 32

    def __post_init__(self):
        for name in ("prefill_token_cost", "prefill_attn_cost", "decode_step_base", "decode_step_per_token"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.num_layers < 1:
            raise ValueError("num_layers must be positive")


LinkKey = Tuple[TierId, TierId]


def link_key(a: TierId, b: TierId) -> LinkKey:
    """Links are undirected in the topology; key them nearer tier first."""
    return (min(a, b), max(a, b))


@dataclass(frozen=True)
class EngineConfig:
    """
    Everything one simulation run needs besides the workload.

    Attributes:
        compute: Prefill/decode cost model
        geometry: KV footprint and page size
        tiers: Configured tiers, Device and Host required
        links: Link per adjacent tier pair, keyed nearer tier first
        backend: Device/Host transfer mechanism
        disk_backend: Host/Disk transfer mechanism
        scheduler: Scheduler knobs
        seed: Seed shared with workload generation
        max_inflight: Admission gate on queued plus running requests
        bubble_contention: Load slowdown while bubble-fill decode runs
        prefetch_enabled: Stage disk-resident prefixes at enqueue
        backup_enabled: Back up newly computed caches to host
        warmup_requests: Leading requests excluded from aggregates
        profile: Name of the hardware profile the run derives from
    """

    compute: ComputeModel = field(default_factory=ComputeModel)
    geometry: KvGeometry = field(default_factory=KvGeometry)
    tiers: Tuple[TierSpec, ...] = ()
    links: Dict[LinkKey, LinkSpec] = field(default_factory=dict)
    backend: IoBackendSpec = field(default_factory=GpuAssistBackend)
    disk_backend: DmaCopyBackend = field(default_factory=lambda: DmaCopyBackend(per_op_latency=100e-6, max_concurrency=64))
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    seed: int = 0
    max_inflight: int = 128
    bubble_contention: float = 0.0
    prefetch_enabled: bool = True
    backup_enabled: bool = True
    warmup_requests: int = 0
    profile: str = "h200-pcie5"

    def __post_init__(self):
        names = [spec.tier for spec in self.tiers]
        if len(set(names)) != len(names):
            raise ValueError("each tier may be configured once")
        if TierId.DEVICE not in names or TierId.HOST not in names:
            raise ValueError("Device and Host tiers are required")
        if link_key(TierId.DEVICE, TierId.HOST) not in self.links:
            raise ValueError("a Device-Host link is required")
        if TierId.DISK in names and link_key(TierId.HOST, TierId.DISK) not in self.links:
            raise ValueError("a Host-Disk link is required when a Disk tier is configured")
        if self.compute.num_layers != self.geometry.num_layers:
            raise ValueError("compute and geometry disagree on num_layers")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be at least 1")
        if not 0.0 <= self.bubble_contention < 1.0:
            raise ValueError("bubble_contention must lie in [0, 1)")
        if self.warmup_requests < 0:
            raise ValueError("warmup_requests must be non-negative")

    def tier_spec(self, tier: TierId) -> Optional[TierSpec]:
        for spec in self.tiers:
            if spec.tier == tier:
                return spec
        return None

    def link(self, a: TierId, b: TierId) -> LinkSpec:
        return self.links[link_key(a, b)]

    def with_scheduler(self, **changes) -> "EngineConfig":
        return replace(self, scheduler=replace(self.scheduler, **changes))

    def with_page_size(self, page_size_tokens: int) -> "EngineConfig":
        return replace(self, geometry=replace(self.geometry, page_size_tokens=page_size_tokens))


class Pattern(str, Enum):
    """Cache-distance arrangement of a single-turn trace."""

    MIN_DISTANCE = "min"
    SHUFFLE = "shuffle"
    MAX_DISTANCE = "max"

    @classmethod
    def parse(cls, value: str) -> "Pattern":
        normalized = value.strip().lower()
        aliases = {"mindistance": "min", "maxdistance": "max", "min-distance": "min", "max-distance": "max"}
        normalized = aliases.get(normalized, normalized)
        for pattern in cls:
            if pattern.value == normalized:
                return pattern
        raise ValueError(f"Unknown pattern: {value}")


@dataclass(frozen=True)
class LengthDistribution:
    """Integer lengths drawn uniformly from mean * (1 +/- spread)."""

    mean: float
    spread: float = 0.2

    def __post_init__(self):
        if self.mean < 0:
            raise ValueError("distribution mean must be non-negative")
        if not 0.0 <= self.spread < 1.0:
            raise ValueError("spread must lie in [0, 1)")

    @property
    def low(self) -> int:
        return int(round(self.mean * (1.0 - self.spread)))

    @property
    def high(self) -> int:
        return int(round(self.mean * (1.0 + self.spread)))


@dataclass(frozen=True)
class WorkloadSpec:
    """
    Synthetic workload description.

    Attributes:
        num_contexts: Shared contexts (or conversations when rounds > 1)
        queries_per_context: Queries per context, or rounds per conversation
        context_len: Context length distribution
        query_len: Query length distribution
        output_len: Output length distribution
        rate: Poisson arrival rate in requests/second
        pattern: Cache-distance arrangement
        thinking_time: Seconds between a response and the next round
        multi_turn: Chain queries of a context as conversation rounds
        max_inflight: Admission cap handed to the engine
        seed: Generation seed
    """

    num_contexts: int = 8
    queries_per_context: LengthDistribution = LengthDistribution(4.0)
    context_len: LengthDistribution = LengthDistribution(4096.0)
    query_len: LengthDistribution = LengthDistribution(64.0)
    output_len: LengthDistribution = LengthDistribution(16.0)
    rate: float = 1.0
    pattern: Pattern = Pattern.SHUFFLE
    thinking_time: float = 0.0
    multi_turn: bool = False
    max_inflight: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.num_contexts < 1:
            raise ValueError("num_contexts must be at least 1")
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.thinking_time < 0:
            raise ValueError("thinking_time must be non-negative")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be at least 1")
        if self.queries_per_context.low < 1:
            raise ValueError("queries_per_context must allow at least one query")
        if self.output_len.low < 1:
            raise ValueError("output_len must be at least 1")
        if self.context_len.low + self.query_len.low < 1:
            raise ValueError("requests need at least one prompt token")
