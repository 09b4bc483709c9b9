"""
Analytical model of tier-to-tier transfer throughput.

Sustained throughput follows Little's law, X = C * S / L, capped by the link's
size-dependent efficiency. GPU-assisted transfers saturate at fine granularity
and instead cost a small slowdown of overlapping compute.
"""

import logging
import math
from dataclasses import replace
from typing import Tuple

import numpy as np

from ..core.exceptions import GranularityError
from ..core.tier import TierId
from ..core.transfer import (
    DmaCopyBackend,
    GpuAssistBackend,
    IoBackendSpec,
    LinkSpec,
    OracleBackend,
    TransferJob,
)

logger = logging.getLogger(__name__)


def efficiency(link: LinkSpec, chunk_size: int) -> float:
    """
    Fraction of peak bandwidth reached with chunk_size-byte operations.

    Interpolates linearly in log(chunk_size) between the link's anchors and
    clamps to the first/last anchor outside their range.
    """
    if chunk_size < 1:
        raise GranularityError(f"chunk size must be at least 1 byte, got {chunk_size}")
    sizes = [math.log(size) for size, _ in link.efficiency_anchors]
    fractions = [eff for _, eff in link.efficiency_anchors]
    return float(np.interp(math.log(chunk_size), sizes, fractions))


def sustained_throughput(backend: IoBackendSpec, link: LinkSpec, chunk_size: int) -> float:
    """
    Steady-state bytes/second of a backend over a link.

    Args:
        backend: Transfer mechanism
        link: Link crossed
        chunk_size: Bytes per contiguous operation

    Returns:
        Throughput in bytes/second; infinite for the oracle backend

    Raises:
        GranularityError: If chunk_size is below what the backend can move
    """
    if isinstance(backend, OracleBackend):
        if chunk_size < 1:
            raise GranularityError(f"chunk size must be at least 1 byte, got {chunk_size}")
        return math.inf
    if isinstance(backend, GpuAssistBackend):
        if chunk_size < backend.min_granularity:
            raise GranularityError(
                f"chunk of {chunk_size} B is below the {backend.min_granularity} B minimum"
            )
        return min(backend.blocks * backend.per_block_bandwidth, link.top_efficiency * link.peak_bandwidth)
    if chunk_size < 1:
        raise GranularityError(f"chunk size must be at least 1 byte, got {chunk_size}")
    little = backend.max_concurrency * chunk_size / backend.per_op_latency
    return min(little, efficiency(link, chunk_size) * link.peak_bandwidth)


def plan_transfer(
    bytes_total: int,
    chunk_size: int,
    backend: IoBackendSpec,
    link: LinkSpec,
    start: float,
    cancellable: bool = False,
    source: TierId = TierId.HOST,
    dest: TierId = TierId.DEVICE,
) -> TransferJob:
    """Plan one bulk transfer; its duration is bytes_total over sustained throughput."""
    if bytes_total <= 0:
        raise ValueError("bytes_total must be positive")
    throughput = sustained_throughput(backend, link, chunk_size)
    duration = 0.0 if math.isinf(throughput) else bytes_total / throughput
    return TransferJob(
        bytes_total=bytes_total,
        chunk_size=chunk_size,
        source=source,
        dest=dest,
        backend=backend,
        start=start,
        duration=duration,
        cancellable=cancellable,
    )


def interference_factors(backend: IoBackendSpec, active: bool) -> Tuple[float, float]:
    """(prefill_slowdown, decode_slowdown) imposed on compute overlapping a transfer."""
    if active and isinstance(backend, GpuAssistBackend):
        return (backend.prefill_slowdown, backend.decode_slowdown)
    return (0.0, 0.0)


def backup_backend(backend: IoBackendSpec) -> IoBackendSpec:
    """Backend used for background backups: GPU-assisted copies get a single block."""
    if isinstance(backend, GpuAssistBackend):
        return replace(backend, blocks=1)
    return backend


def transfer_seconds(token_bytes: int, chunk_size: int, backend: IoBackendSpec, link: LinkSpec) -> float:
    """Duration of moving token_bytes, zero when nothing moves."""
    if token_bytes <= 0:
        return 0.0
    throughput = sustained_throughput(backend, link, chunk_size)
    if math.isinf(throughput):
        return 0.0
    return token_bytes / throughput


def describe(backend: IoBackendSpec) -> str:
    if isinstance(backend, DmaCopyBackend):
        return f"dma(C={backend.max_concurrency}, L={backend.per_op_latency * 1e6:.1f}us)"
    if isinstance(backend, GpuAssistBackend):
        return f"gpu(blocks={backend.blocks}, {backend.per_block_bandwidth / 1e9:.1f}GB/s/block)"
    return "oracle"
