"""
Nodes and result types of the tiered radix tree.
"""

import itertools
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from .tier import PageRef, TierId, TransientMark

_node_ids = itertools.count()


class HiRadixNode:
    """
    A radix-tree node over token IDs.

    A committed node records the tiers holding its KV pages. A transient node
    holds no pages and only marks computation that is queued or running.

    Attributes:
        edge_tokens: Tokens on the edge from the parent
        children: Child nodes keyed by their first page of tokens
        parent: Parent node, None for the root
        pages: Per-tier pages covering exactly the edge tokens
        last_access: Simulation time of the last match through this node
        ref_count: Active users pinning this node
        transient: Pending-computation mark, None for committed nodes
    """

    __slots__ = (
        "node_id",
        "edge_tokens",
        "children",
        "parent",
        "pages",
        "last_access",
        "ref_count",
        "transient",
        "backup_pending",
        "prefetch_pending",
    )

    def __init__(
        self,
        edge_tokens: Tuple[int, ...] = (),
        parent: Optional["HiRadixNode"] = None,
        transient: Optional[TransientMark] = None,
        last_access: float = 0.0,
    ):
        self.node_id = next(_node_ids)
        self.edge_tokens = tuple(edge_tokens)
        self.children: Dict[Any, HiRadixNode] = {}
        self.parent = parent
        self.pages: Dict[TierId, List[PageRef]] = {}
        self.last_access = last_access
        self.ref_count = 0
        self.transient = transient
        self.backup_pending = False
        self.prefetch_pending = False

    @property
    def residency(self) -> FrozenSet[TierId]:
        return frozenset(self.pages)

    @property
    def is_root(self) -> bool:
        return self.parent is None

    @property
    def is_transient(self) -> bool:
        return self.transient is not None

    @property
    def token_count(self) -> int:
        return len(self.edge_tokens)

    @property
    def nearest_tier(self) -> Optional[TierId]:
        return min(self.pages) if self.pages else None

    def resident_at(self, tier: TierId) -> bool:
        return tier in self.pages

    def path_tokens(self) -> Tuple[int, ...]:
        """Tokens from the root down to and including this node."""
        parts = []
        node = self
        while node is not None and not node.is_root:
            parts.append(node.edge_tokens)
            node = node.parent
        return tuple(token for part in reversed(parts) for token in part)

    def __repr__(self) -> str:
        mark = self.transient.value if self.transient else ",".join(t.name for t in sorted(self.pages))
        return f"HiRadixNode(id={self.node_id}, tokens={len(self.edge_tokens)}, {mark or 'ghost'})"

    def __lt__(self, other: "HiRadixNode") -> bool:
        return (self.last_access, self.node_id) < (other.last_access, other.node_id)


@dataclass
class MatchResult:
    """
    Longest stored prefix of a query with its per-tier breakdown.

    Attributes:
        total_matched: Matched tokens
        device_tokens: Matched tokens whose nearest copy is on the device
        host_tokens: Matched tokens whose nearest copy is in host memory
        disk_tokens: Matched tokens only on disk
        transient_tokens: Matched tokens on transient nodes
        node_path: Nodes traversed, root excluded
    """

    total_matched: int = 0
    device_tokens: int = 0
    host_tokens: int = 0
    disk_tokens: int = 0
    transient_tokens: int = 0
    node_path: List[HiRadixNode] = field(default_factory=list)

    @property
    def committed_tokens(self) -> int:
        return self.device_tokens + self.host_tokens + self.disk_tokens

    @property
    def last_node(self) -> Optional[HiRadixNode]:
        return self.node_path[-1] if self.node_path else None

    def tier_tokens(self, tier: TierId) -> int:
        return {
            TierId.DEVICE: self.device_tokens,
            TierId.HOST: self.host_tokens,
            TierId.DISK: self.disk_tokens,
        }[tier]


@dataclass(frozen=True)
class Writeback:
    """A victim that must be copied to the next tier before it is dropped."""

    node: HiRadixNode
    source: TierId
    dest: TierId
    token_count: int
    bytes_total: int


@dataclass
class EvictionPlan:
    """
    Outcome of an eviction pass.

    Attributes:
        victim_tokens: Tokens selected for eviction
        freed_bytes: Bytes released now plus bytes released when write-backs land
        writebacks: Victims awaiting a copy to the next tier
        released_pages: Pages dropped immediately (the caller frees them)
    """

    victim_tokens: int = 0
    freed_bytes: int = 0
    writebacks: List[Writeback] = field(default_factory=list)
    released_pages: List[PageRef] = field(default_factory=list)

    @property
    def immediate_bytes(self) -> int:
        return self.freed_bytes - sum(job.bytes_total for job in self.writebacks)
