"""
Simulation report rows and the assembled SimReport.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

REPORT_VERSION = 1


@dataclass(frozen=True)
class RequestRecord:
    """Outcome of one request."""

    id: str
    arrival: float
    ttft: float
    e2e: float
    context_tokens: int
    device_hit_tokens: int
    host_hit_tokens: int
    disk_hit_tokens: int
    recomputed_tokens: int
    output_tokens: int
    deferrals: int = 0

    @property
    def hit_tokens(self) -> int:
        return self.device_hit_tokens + self.host_hit_tokens + self.disk_hit_tokens


@dataclass(frozen=True)
class BatchRecord:
    """Outcome of one prefill batch."""

    batch: int
    start: float
    compute_tokens: int
    host_load_tokens: int
    device_hit_tokens: int
    ratio: float
    wall: float
    stall: float
    bubble_steps: int
    requests: str
    bundle_hits: int = 0


@dataclass(frozen=True)
class AggregateStats:
    """Run-level summary recomputable from the per-request and per-batch rows."""

    requests: int
    mean_ttft: float
    p50_ttft: float
    p90_ttft: float
    throughput: float
    stall_fraction: float
    hit_rate: float
    deferrals: int
    bundle_hits: int
    makespan: float

    def __post_init__(self):
        if not 0.0 <= self.stall_fraction <= 1.0:
            raise ValueError("stall_fraction must lie in [0, 1]")


@dataclass
class SimReport:
    """Everything a run produces for downstream analysis."""

    per_request: List[RequestRecord] = field(default_factory=list)
    per_batch: List[BatchRecord] = field(default_factory=list)
    aggregate: Optional[AggregateStats] = None
    scheduler_log: List[Dict[str, Any]] = field(default_factory=list)
    decode_steps: int = 0
    warmup_requests: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config_version": REPORT_VERSION,
            "decode_steps": self.decode_steps,
            "warmup_requests": self.warmup_requests,
            "aggregate": asdict(self.aggregate) if self.aggregate else {},
            "per_request": [asdict(row) for row in self.per_request],
            "per_batch": [asdict(row) for row in self.per_batch],
        }
