"""
Unit tests for the TierStore class.
"""

import numpy as np
import pytest

from src.core.exceptions import CapacityError, InvariantViolationError
from src.core.tier import KvGeometry, PageRef, TierId, TierSpec
from src.services.tier_store import TierStore


class TestTierStore:
    """Test cases for the TierStore class."""

    def setup_method(self):
        """Set up test fixtures."""
        self.geometry = KvGeometry(num_layers=2, kv_bytes_per_token_per_layer=8, page_size_tokens=4)
        # 64 bytes per page
        self.store = TierStore(
            self.geometry,
            [TierSpec(TierId.DEVICE, 64 * 10), TierSpec(TierId.HOST, 64 * 100)],
        )

    def test_tiers(self):
        assert self.store.tiers == [TierId.DEVICE, TierId.HOST]
        assert not self.store.has_tier(TierId.DISK)

    def test_allocate_full_and_partial_pages(self):
        """Test that the last page may be partial but is charged in full."""
        pages = self.store.allocate_pages(TierId.DEVICE, 10)

        assert [page.tokens_covered for page in pages] == [4, 4, 2]
        assert self.store.usage(TierId.DEVICE) == 3 * 64
        assert self.store.free_bytes(TierId.DEVICE) == 7 * 64

    def test_allocate_nothing(self):
        assert self.store.allocate_pages(TierId.DEVICE, 0) == []

    def test_capacity_error(self):
        """Test that over-allocation names the shortfall."""
        self.store.allocate_pages(TierId.DEVICE, 36)

        with pytest.raises(CapacityError) as excinfo:
            self.store.allocate_pages(TierId.DEVICE, 8)
        assert excinfo.value.shortfall == 64
        assert self.store.usage(TierId.DEVICE) == 9 * 64

    def test_release_reuses_lowest_index(self):
        """Test that freed page indices are reused lowest first."""
        pages = self.store.allocate_pages(TierId.DEVICE, 12)
        freed = self.store.release_pages([pages[2], pages[0]])

        again = self.store.allocate_pages(TierId.DEVICE, 4)

        assert freed == 128
        assert again[0].page_index == 0
        assert self.store.live_pages(TierId.DEVICE) == {0, 1}

    def test_release_not_live(self):
        """Test that releasing a page twice is an invariant violation."""
        pages = self.store.allocate_pages(TierId.HOST, 4)
        self.store.release_pages(pages)

        with pytest.raises(InvariantViolationError, match="not live"):
            self.store.release_pages(pages)

    def test_unconfigured_tier(self):
        with pytest.raises(InvariantViolationError, match="DISK is not configured"):
            self.store.allocate_pages(TierId.DISK, 4)

    def test_release_foreign_page(self):
        with pytest.raises(InvariantViolationError):
            self.store.release_pages([PageRef(TierId.DEVICE, 5, 4)])

    def test_bytes_for(self):
        assert self.store.bytes_for(5) == 128
        assert self.store.bytes_for(4) == 64

    def test_duplicate_tier(self):
        with pytest.raises(ValueError, match="configured twice"):
            TierStore(self.geometry, [TierSpec(TierId.HOST, 64), TierSpec(TierId.HOST, 64)])


class TestRandomAllocation:
    """Random allocate and release sequences against a model of held pages."""

    @pytest.mark.parametrize("seed", range(20))
    def test_usage_never_exceeds_capacity(self, seed):
        """Test that usage stays within capacity and matches the pages held."""
        rng = np.random.default_rng(seed)
        geometry = KvGeometry(num_layers=2, kv_bytes_per_token_per_layer=8, page_size_tokens=4)
        store = TierStore(geometry, [TierSpec(TierId.DEVICE, 64 * 10), TierSpec(TierId.HOST, 64 * 25)])
        held = {TierId.DEVICE: [], TierId.HOST: []}

        for _ in range(2000):
            tier = (TierId.DEVICE, TierId.HOST)[int(rng.integers(0, 2))]
            if held[tier] and rng.random() < 0.45:
                count = int(rng.integers(1, len(held[tier]) + 1))
                picks = set(rng.choice(len(held[tier]), size=count, replace=False).tolist())
                released = [page for index, page in enumerate(held[tier]) if index in picks]
                held[tier] = [page for index, page in enumerate(held[tier]) if index not in picks]
                assert store.release_pages(released) == 64 * len(released)
            else:
                tokens = int(rng.integers(0, 21))
                before = store.usage(tier)
                try:
                    pages = store.allocate_pages(tier, tokens)
                except CapacityError as err:
                    assert err.shortfall == geometry.pages_for(tokens) * 64 - store.free_bytes(tier)
                    assert store.usage(tier) == before
                else:
                    assert sum(page.tokens_covered for page in pages) == tokens
                    held[tier].extend(pages)

            for each in (TierId.DEVICE, TierId.HOST):
                assert store.usage(each) <= store.capacity(each)
                assert store.usage(each) == 64 * len(held[each])
                assert store.live_pages(each) == {page.page_index for page in held[each]}
