"""
Memory tier value types.

This module contains the identifiers and specifications describing the memory
hierarchy: tiers ordered by distance from compute, page references, the KV
geometry of the served model and per-tier capacity/layout.
"""

from dataclasses import dataclass
from enum import Enum, IntEnum


class TierId(IntEnum):
    """Memory tiers ordered by distance from compute."""

    DEVICE = 0
    HOST = 1
    DISK = 2

    @classmethod
    def parse(cls, value: str) -> "TierId":
        try:
            return cls[value.strip().upper()]
        except KeyError:
            raise ValueError(f"Unknown tier: {value}")


class Layout(str, Enum):
    """KV cache memory layout of a tier."""

    LAYER_FIRST = "layer_first"
    PAGE_FIRST = "page_first"

    @classmethod
    def parse(cls, value: str) -> "Layout":
        normalized = value.strip().lower().replace("-", "_")
        for layout in cls:
            if layout.value == normalized:
                return layout
        raise ValueError(f"Unknown layout: {value}")


class TransientMark(str, Enum):
    """Pending-computation marks carried by transient tree nodes."""

    IN_QUEUE = "in_queue"
    IN_FLIGHT = "in_flight"


@dataclass(frozen=True)
class PageRef:
    """
    A live page in one tier.

    Attributes:
        tier: Tier holding the page
        page_index: Index unique among the tier's live pages
        tokens_covered: Tokens stored in the page (the last page may be partial)
    """

    tier: TierId
    page_index: int
    tokens_covered: int

    def __post_init__(self):
        if self.page_index < 0:
            raise ValueError("page_index must be non-negative")
        if self.tokens_covered < 1:
            raise ValueError("tokens_covered must be at least 1")


@dataclass(frozen=True)
class KvGeometry:
    """
    Per-token KV footprint of the served model.

    Attributes:
        num_layers: Transformer layers
        kv_bytes_per_token_per_layer: K and V bytes for one token in one layer
        page_size_tokens: Tokens per page
    """

    num_layers: int = 32
    kv_bytes_per_token_per_layer: int = 4096
    page_size_tokens: int = 32

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be positive")
        if self.kv_bytes_per_token_per_layer < 1:
            raise ValueError("kv_bytes_per_token_per_layer must be positive")
        if self.page_size_tokens < 1:
            raise ValueError("page_size_tokens must be at least 1")

    @property
    def bytes_per_token(self) -> int:
        return self.num_layers * self.kv_bytes_per_token_per_layer

    @property
    def page_bytes(self) -> int:
        return self.page_size_tokens * self.bytes_per_token

    def pages_for(self, token_count: int) -> int:
        """Pages needed to hold token_count tokens, counting a partial page as whole."""
        return -(-token_count // self.page_size_tokens)

    def aligned(self, token_count: int) -> int:
        """Largest page-aligned token count not exceeding token_count."""
        return token_count // self.page_size_tokens * self.page_size_tokens


@dataclass(frozen=True)
class TierSpec:
    """
    Capacity and layout of one memory tier.

    Attributes:
        tier: Which tier
        capacity: Capacity in bytes
        layout: Memory layout used by the tier
    """

    tier: TierId
    capacity: int
    layout: Layout = Layout.LAYER_FIRST

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"{self.tier.name} capacity must be positive")
        if self.tier == TierId.DEVICE and self.layout != Layout.LAYER_FIRST:
            raise ValueError("Device layout must be layer_first")
