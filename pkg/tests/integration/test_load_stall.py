"""
Integration tests for prefill stalls against the load/compute ratio.

Synthetic single-member batches load ratio x 100 host tokens and compute 100
new tokens on the h200-pcie5 profile.
"""

import pytest

from src.core.batch import BatchPlan, MemberPlan
from src.core.tier import Layout, TierId
from src.services.engine import prefill_wall_time
from src.utils.profiles import hardware_profile

RATIOS = (1, 10, 50, 100, 200, 500, 1000)
COMPUTE_TOKENS = 100


def synthetic_batch(ratio):
    batch = BatchPlan()
    batch.add(MemberPlan("r", host_tokens=ratio * COMPUTE_TOKENS, compute_tokens=COMPUTE_TOKENS))
    return batch


def stall_fractions(engine):
    fractions = []
    for ratio in RATIOS:
        wall, stall = prefill_wall_time(synthetic_batch(ratio), engine)
        fractions.append(stall / wall)
    return fractions


class TestLoadStall:
    """Test cases for stall fraction across load/compute ratios."""

    def setup_method(self):
        """Set up test fixtures."""
        machine = hardware_profile("h200-pcie5")
        self.gpu = machine.engine_config(backend="gpu", with_disk=False)
        self.dma = machine.engine_config(backend="dma", with_disk=False)

    def test_gpu_assist_stall_shape(self):
        """Test that stalls stay negligible until loads dominate, then grow."""
        fractions = stall_fractions(self.gpu)

        assert all(a <= b for a, b in zip(fractions, fractions[1:]))
        assert all(fraction < 0.05 for ratio, fraction in zip(RATIOS, fractions) if ratio <= 50)
        assert all(fraction > 0.0 for ratio, fraction in zip(RATIOS, fractions) if ratio >= 200)
        assert all(0.0 <= fraction <= 1.0 for fraction in fractions)

    def test_copy_engine_runs_on_layer_first_host(self):
        """Test that the copy-engine configuration lays host memory out layer-first."""
        assert self.dma.tier_spec(TierId.HOST).layout == Layout.LAYER_FIRST
        assert self.gpu.tier_spec(TierId.HOST).layout == Layout.PAGE_FIRST

    def test_copy_engine_stalls_more(self):
        """Test that small layer-first chunks over the copy engine stall more at every ratio."""
        gpu = stall_fractions(self.gpu)
        dma = stall_fractions(self.dma)

        assert all(d > g for d, g in zip(dma, gpu))
        assert dma[-1] > 0.5

    def test_compute_bound_stall_is_first_layer_load(self):
        """Test that a compute-bound batch only waits for the first layer's load."""
        batch = synthetic_batch(1)
        wall, stall = prefill_wall_time(batch, self.gpu)

        per_token = self.gpu.geometry.bytes_per_token / 50e9
        first_layer = COMPUTE_TOKENS * per_token / self.gpu.geometry.num_layers
        assert stall == pytest.approx(first_layer, rel=1e-9)
