"""
Prefill batch plans and decode slots produced by the scheduler.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional


@dataclass
class MemberPlan:
    """
    Per-request accounting inside a batch.

    Attributes:
        request_id: Member request
        device_tokens: Prefix tokens already on the device
        host_tokens: Prefix tokens to load from host (includes staged disk tokens)
        disk_tokens: Disk-resident prefix tokens not staged (recomputed)
        transient_tokens: Uncached tokens sitting on transient nodes
        compute_tokens: Tokens this member prefills after in-batch dedup
        shared_tokens: Uncached tokens another member already computes
        bundle_of: Member whose uncached prefix this one shares, if any
        bundle_prefix: Common prefix length with that member
    """

    request_id: str
    device_tokens: int = 0
    host_tokens: int = 0
    disk_tokens: int = 0
    transient_tokens: int = 0
    compute_tokens: int = 0
    shared_tokens: int = 0
    bundle_of: Optional[str] = None
    bundle_prefix: int = 0

    @property
    def cached_tokens(self) -> int:
        return self.device_tokens + self.host_tokens

    @property
    def committed_tokens(self) -> int:
        return self.device_tokens + self.host_tokens + self.disk_tokens


@dataclass
class BatchPlan:
    """
    A prefill batch with its load/compute accounting.

    Attributes:
        requests: Member ids in formation order
        compute_tokens: New tokens to prefill after in-batch dedup
        host_load_tokens: Tokens loaded from host memory
        device_hit_tokens: Tokens already resident on the device
        bundle_groups: Members grouped by shared uncached prefix
        members: Per-member accounting keyed by request id
    """

    requests: List[str] = field(default_factory=list)
    compute_tokens: int = 0
    host_load_tokens: int = 0
    device_hit_tokens: int = 0
    bundle_groups: List[List[str]] = field(default_factory=list)
    members: Dict[str, MemberPlan] = field(default_factory=dict)
    deferred: List[str] = field(default_factory=list)
    bundle_hits: int = 0

    @property
    def load_compute_ratio(self) -> float:
        return self.host_load_tokens / max(self.compute_tokens, 1)

    @property
    def size(self) -> int:
        return len(self.requests)

    def __len__(self) -> int:
        return len(self.requests)

    def __contains__(self, request_id: str) -> bool:
        return request_id in self.members

    def add(self, member: MemberPlan) -> None:
        """Append a member and fold its accounting into the batch totals."""
        if member.request_id in self.members:
            raise ValueError(f"{member.request_id} already in batch")
        self.requests.append(member.request_id)
        self.members[member.request_id] = member
        self.compute_tokens += member.compute_tokens
        self.host_load_tokens += member.host_tokens
        self.device_hit_tokens += member.device_tokens
        if member.bundle_of is None:
            self.bundle_groups.append([member.request_id])
        else:
            for group in self.bundle_groups:
                if member.bundle_of in group:
                    group.append(member.request_id)
                    break
            self.bundle_hits += 1

    def remove_last(self) -> MemberPlan:
        """Drop the tail member, undoing its accounting."""
        request_id = self.requests.pop()
        member = self.members.pop(request_id)
        self.compute_tokens -= member.compute_tokens
        self.host_load_tokens -= member.host_tokens
        self.device_hit_tokens -= member.device_tokens
        for group in self.bundle_groups:
            if request_id in group:
                group.remove(request_id)
                if member.bundle_of is not None:
                    self.bundle_hits -= 1
                break
        self.bundle_groups = [group for group in self.bundle_groups if group]
        return member

    def to_log_record(self, index: int, bubble_steps: int = 0) -> dict:
        return {
            "batch": index,
            "requests": list(self.requests),
            "compute_tokens": self.compute_tokens,
            "host_load_tokens": self.host_load_tokens,
            "device_hit_tokens": self.device_hit_tokens,
            "ratio": self.load_compute_ratio,
            "bundle_groups": [list(group) for group in self.bundle_groups],
            "deferred": list(self.deferred),
            "bubble_steps": bubble_steps,
        }


@dataclass(frozen=True)
class DecodeSlot:
    """Decode steps to run while a prefill batch waits on loading."""

    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("a decode slot needs at least one step")


@dataclass(frozen=True)
class BatchEstimate:
    """Per-batch timing estimates the bubble planner works from (seconds)."""

    t_load: float
    t_comp: float
    decode_step: float
