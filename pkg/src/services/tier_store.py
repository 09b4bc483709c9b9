"""
Tier capacity accounting and page allocation.

This module provides the TierStore, which hands out fixed-size pages per memory
tier and tracks usage, and transfer_chunk_size, which derives the contiguous
I/O size between two tier layouts.
"""

import heapq
import logging
from typing import Dict, Iterable, List, Set

from ..core.exceptions import CapacityError, InvariantViolationError
from ..core.tier import KvGeometry, Layout, PageRef, TierId, TierSpec

logger = logging.getLogger(__name__)


def transfer_chunk_size(geometry: KvGeometry, source_layout: Layout, dest_layout: Layout) -> int:
    """
    Bytes per contiguous I/O operation between two layouts.

    A layer-first endpoint stores each layer of a page separately, so a single
    operation moves one page of one layer. Two page-first endpoints move all
    layers of a page at once.

    Args:
        geometry: KV geometry of the model
        source_layout: Layout of the tier read from
        dest_layout: Layout of the tier written to

    Returns:
        Chunk size in bytes
    """
    per_layer = geometry.page_size_tokens * geometry.kv_bytes_per_token_per_layer
    if source_layout == Layout.PAGE_FIRST and dest_layout == Layout.PAGE_FIRST:
        return per_layer * geometry.num_layers
    return per_layer


class _TierPool:
    """Page pool of a single tier."""

    def __init__(self, spec: TierSpec, page_bytes: int):
        self.spec = spec
        self.page_bytes = page_bytes
        self.live: Dict[int, PageRef] = {}
        self.free_indices: List[int] = []
        self.next_index = 0

    @property
    def usage(self) -> int:
        return len(self.live) * self.page_bytes

    @property
    def free_bytes(self) -> int:
        return self.spec.capacity - self.usage

    def take_index(self) -> int:
        if self.free_indices:
            return heapq.heappop(self.free_indices)
        index = self.next_index
        self.next_index += 1
        return index


class TierStore:
    """
    Page allocator over the configured memory tiers.

    Partial trailing pages are charged as full pages.
    """

    def __init__(self, geometry: KvGeometry, tiers: Iterable[TierSpec]):
        self.geometry = geometry
        self._pools: Dict[TierId, _TierPool] = {}
        for spec in tiers:
            if spec.tier in self._pools:
                raise ValueError(f"Tier {spec.tier.name} configured twice")
            self._pools[spec.tier] = _TierPool(spec, geometry.page_bytes)
        logger.debug(
            "Tier store: %s",
            ", ".join(f"{tier.name}={pool.spec.capacity}B" for tier, pool in self._pools.items()),
        )

    @property
    def tiers(self) -> List[TierId]:
        return sorted(self._pools)

    def has_tier(self, tier: TierId) -> bool:
        return tier in self._pools

    def spec(self, tier: TierId) -> TierSpec:
        return self._pool(tier).spec

    def layout(self, tier: TierId) -> Layout:
        return self._pool(tier).spec.layout

    def capacity(self, tier: TierId) -> int:
        return self._pool(tier).spec.capacity

    def usage(self, tier: TierId) -> int:
        return self._pool(tier).usage

    def free_bytes(self, tier: TierId) -> int:
        return self._pool(tier).free_bytes

    def live_pages(self, tier: TierId) -> Set[int]:
        return set(self._pool(tier).live)

    def bytes_for(self, token_count: int) -> int:
        """Bytes charged for token_count tokens at page granularity."""
        return self.geometry.pages_for(token_count) * self.geometry.page_bytes

    def allocate_pages(self, tier: TierId, token_count: int) -> List[PageRef]:
        """
        Allocate pages covering token_count tokens.

        Args:
            tier: Tier to allocate in
            token_count: Tokens to cover

        Returns:
            Pages in order; every page is full except possibly the last

        Raises:
            CapacityError: If the tier cannot hold the pages
        """
        pool = self._pool(tier)
        if token_count <= 0:
            return []
        page_size = self.geometry.page_size_tokens
        needed = self.geometry.pages_for(token_count) * pool.page_bytes
        if needed > pool.free_bytes:
            raise CapacityError(tier, needed - pool.free_bytes)

        pages = []
        remaining = token_count
        while remaining > 0:
            covered = min(page_size, remaining)
            page = PageRef(tier, pool.take_index(), covered)
            pool.live[page.page_index] = page
            pages.append(page)
            remaining -= covered
        return pages

    def release_pages(self, pages: Iterable[PageRef]) -> int:
        """
        Return pages to their tiers.

        Returns:
            Bytes freed

        Raises:
            InvariantViolationError: If a page is not live
        """
        freed = 0
        for page in pages:
            pool = self._pool(page.tier)
            live = pool.live.get(page.page_index)
            if live is None or live != page:
                raise InvariantViolationError(
                    f"Release of page {page.page_index} on {page.tier.name} that is not live"
                )
            del pool.live[page.page_index]
            heapq.heappush(pool.free_indices, page.page_index)
            freed += pool.page_bytes
        return freed

    def _pool(self, tier: TierId) -> _TierPool:
        try:
            return self._pools[tier]
        except KeyError:
            raise InvariantViolationError(f"Tier {tier.name} is not configured")
