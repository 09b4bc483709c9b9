"""
Interconnect and I/O backend specifications, and planned transfers.
"""

from dataclasses import dataclass
from typing import Tuple, Union

from .tier import TierId


@dataclass(frozen=True)
class LinkSpec:
    """
    A unidirectional link between two tiers.

    Attributes:
        peak_bandwidth: Theoretical bandwidth in bytes/second
        efficiency_anchors: (chunk_size bytes, efficiency) points, strictly
            increasing in chunk size, efficiencies in (0, 1]
    """

    peak_bandwidth: float
    efficiency_anchors: Tuple[Tuple[int, float], ...]

    def __post_init__(self):
        if self.peak_bandwidth <= 0:
            raise ValueError("peak_bandwidth must be positive")
        if not self.efficiency_anchors:
            raise ValueError("at least one efficiency anchor is required")
        sizes = [size for size, _ in self.efficiency_anchors]
        if any(size < 1 for size in sizes):
            raise ValueError("anchor chunk sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("anchor chunk sizes must be strictly increasing")
        if any(not 0.0 < eff <= 1.0 for _, eff in self.efficiency_anchors):
            raise ValueError("anchor efficiencies must lie in (0, 1]")

    @property
    def top_efficiency(self) -> float:
        return self.efficiency_anchors[-1][1]

    def scaled(self, factor: float) -> "LinkSpec":
        """Same curve over a link with peak bandwidth multiplied by factor."""
        return LinkSpec(self.peak_bandwidth * factor, self.efficiency_anchors)


@dataclass(frozen=True)
class DmaCopyBackend:
    """Copy-engine transfers: per-op latency L with at most C ops in flight."""

    per_op_latency: float = 40e-6
    max_concurrency: int = 5

    def __post_init__(self):
        if self.per_op_latency <= 0:
            raise ValueError("per_op_latency must be positive")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be at least 1")

    @property
    def name(self) -> str:
        return "dma"


@dataclass(frozen=True)
class GpuAssistBackend:
    """Kernel-driven transfers over a few thread blocks at fine granularity."""

    blocks: int = 2
    per_block_bandwidth: float = 25e9
    min_granularity: int = 128
    prefill_slowdown: float = 0.05
    decode_slowdown: float = 0.10

    def __post_init__(self):
        if self.blocks < 1:
            raise ValueError("blocks must be at least 1")
        if self.per_block_bandwidth <= 0:
            raise ValueError("per_block_bandwidth must be positive")
        if self.min_granularity < 1:
            raise ValueError("min_granularity must be at least 1")
        for slowdown in (self.prefill_slowdown, self.decode_slowdown):
            if not 0.0 <= slowdown < 1.0:
                raise ValueError("slowdowns must lie in [0, 1)")

    @property
    def name(self) -> str:
        return "gpu"


@dataclass(frozen=True)
class OracleBackend:
    """Infinite-bandwidth upper bound: transfers take no time."""

    @property
    def name(self) -> str:
        return "oracle"


IoBackendSpec = Union[DmaCopyBackend, GpuAssistBackend, OracleBackend]


@dataclass(frozen=True)
class TransferJob:
    """
    One bulk KV movement between two tiers.

    Attributes:
        bytes_total: Bytes moved
        chunk_size: Bytes per contiguous I/O operation
        source: Tier read from
        dest: Tier written to
        backend: Mechanism performing the copy
        start: Simulation time the transfer starts
        duration: Seconds the transfer takes
        cancellable: Whether the transfer may be terminated early
    """

    bytes_total: int
    chunk_size: int
    source: TierId
    dest: TierId
    backend: IoBackendSpec
    start: float
    duration: float
    cancellable: bool = False

    def __post_init__(self):
        if self.bytes_total <= 0:
            raise ValueError("bytes_total must be positive")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")

    @property
    def direction(self) -> Tuple[TierId, TierId]:
        return (self.source, self.dest)

    @property
    def end(self) -> float:
        return self.start + self.duration

    def fraction_done(self, clock: float) -> float:
        """Elapsed fraction of the transfer at clock, in [0, 1]."""
        if self.duration <= 0 or clock >= self.end:
            return 1.0
        if clock <= self.start:
            return 0.0
        return (clock - self.start) / self.duration

    def credited_bytes(self, clock: float) -> int:
        """Bytes moved by clock under proportional progress."""
        return int(self.bytes_total * self.fraction_done(clock))
