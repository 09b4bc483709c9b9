"""
Integration tests for hit rate and TTFT across page sizes.

Three two-round conversations over 16k-token prompts run one request at a
time on the h200-pcie5 profile. The device holds 24 Ki tokens, so another
conversation pushes each one out to host memory before its second round, which
then loads its prefix over the Device/Host link. Prompt plus output of the
first round is 16684 tokens, so larger pages leave a longer tail to recompute.
"""

from dataclasses import replace

from src.core.request import TraceRecord
from src.core.tier import TierId
from src.services.sweep_service import SweepService
from src.utils.profiles import hardware_profile

PAGE_SIZES = (1, 16, 32, 64, 256, 1024)
DEVICE_TOKENS = 24 * 1024
SLOT_SECONDS = 20.0
CONVERSATIONS = 3


def conversation_trace():
    """Round 0 of conversation k in slot 2k, round 1 in slot 2k+3."""
    trace = []
    for k in range(CONVERSATIONS):
        first = f"conv{k}-r0"
        trace.append(TraceRecord(first, 2 * k * SLOT_SECONDS, f"conv{k}", 16284, 100, 300))
        trace.append(
            TraceRecord(f"conv{k}-r1", (2 * k + 3) * SLOT_SECONDS, f"conv{k}", 16684, 100, 16, round=1, depends_on=first)
        )
    return sorted(trace, key=lambda record: record.arrival_s)


def engine_for(backend):
    engine = hardware_profile("h200-pcie5").engine_config(backend=backend, with_disk=False)
    capacity = DEVICE_TOKENS * engine.geometry.bytes_per_token
    tiers = tuple(replace(spec, capacity=capacity) if spec.tier == TierId.DEVICE else spec for spec in engine.tiers)
    return replace(engine, tiers=tiers)


def sweep(backend):
    return SweepService().sweep_page(engine_for(backend), conversation_trace(), PAGE_SIZES)


class TestPageSizeTradeoff:
    """Test cases for the page-size sweep on constrained device memory."""

    def test_hit_rate_never_rises(self):
        """Test that larger pages never match more of a prompt."""
        hit_rates = [row["hit_rate"] for row in sweep("gpu")]

        assert all(a >= b for a, b in zip(hit_rates, hit_rates[1:]))
        assert hit_rates[0] > hit_rates[-1]

    def test_copy_engine_ttft_improves_then_degrades(self):
        """Test that copy-engine TTFT bottoms out at a middle page size."""
        ttfts = [row["mean_ttft"] for row in sweep("dma")]
        best = ttfts.index(min(ttfts))

        assert 0 < best < len(ttfts) - 1
        assert ttfts[0] > 1.5 * ttfts[best]
        assert ttfts[-1] > ttfts[best]

    def test_gpu_assist_ttft_is_flat(self):
        """Test that GPU-assisted TTFT moves less than 5% across page sizes."""
        ttfts = [row["mean_ttft"] for row in sweep("gpu")]

        assert max(ttfts) < 1.05 * min(ttfts)

    def test_copy_engine_host_memory_is_layer_first(self):
        assert engine_for("dma").tier_spec(TierId.HOST).layout.value == "layer_first"
