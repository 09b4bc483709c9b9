"""
Unit tests for the SweepService class.
"""

import pytest

from src.core.request import TraceRecord
from src.core.sim_config import LengthDistribution, Pattern, WorkloadSpec
from src.core.tier import Layout, TierId
from src.core.transfer import DmaCopyBackend, GpuAssistBackend
from src.services.metrics_service import MATRIX_COLUMNS
from src.services.sweep_service import SweepService, rescale_arrivals, with_features
from src.utils.profiles import hardware_profile
from tests.builders import tiny_engine_config


def shared_context_trace():
    return [
        TraceRecord("q0", 0.0, "doc", 200, 5, 2),
        TraceRecord("q1", 0.01, "doc", 200, 5, 2),
        TraceRecord("q2", 0.02, "doc", 200, 5, 2),
    ]


class TestSweepHelpers:
    """Test cases for with_features and rescale_arrivals."""

    def test_with_features_scheduler_flags(self):
        engine = with_features(tiny_engine_config(), {"deferral": False, "dedup": False, "bubble": True})

        assert engine.scheduler.deferral_enabled is False
        assert engine.scheduler.dedup_enabled is False
        assert engine.scheduler.bubble_fill_enabled is True
        assert engine.scheduler.balanced_batching_enabled is True

    def test_with_features_backend(self):
        """Test that the io-backend feature switches between copy engine and GPU assist."""
        base = tiny_engine_config()

        assert isinstance(with_features(base, {"io-backend": True}).backend, GpuAssistBackend)
        assert isinstance(with_features(base, {"io-backend": False}).backend, DmaCopyBackend)
        assert with_features(base, {}) is base

    def test_with_features_backend_relays_host_and_disk(self):
        """Test that switching to the copy engine lays host and disk out layer-first, and back."""
        gpu = hardware_profile("h200-pcie5").engine_config(backend="gpu")

        dma = with_features(gpu, {"io-backend": False})
        restored = with_features(dma, {"io-backend": True})

        assert gpu.tier_spec(TierId.HOST).layout == Layout.PAGE_FIRST
        assert dma.tier_spec(TierId.HOST).layout == Layout.LAYER_FIRST
        assert dma.tier_spec(TierId.DISK).layout == Layout.LAYER_FIRST
        assert dma.tier_spec(TierId.DEVICE).layout == Layout.LAYER_FIRST
        assert restored.tier_spec(TierId.HOST).layout == Layout.PAGE_FIRST
        assert restored.tier_spec(TierId.DISK).layout == Layout.PAGE_FIRST

    def test_rescale_arrivals(self):
        trace = [TraceRecord("a", 0.0, "c", 1, 1, 1), TraceRecord("b", 1.0, "c", 1, 1, 1), TraceRecord("c", 3.0, "c", 1, 1, 1)]

        rescaled = rescale_arrivals(trace, 2.0)

        assert [record.arrival_s for record in rescaled] == pytest.approx([0.0, 1 / 3, 1.0])
        assert [record.id for record in rescaled] == ["a", "b", "c"]

    def test_rescale_degenerate_trace(self):
        single = [TraceRecord("a", 5.0, "c", 1, 1, 1)]

        assert rescale_arrivals(single, 3.0) == single


class TestSweepService:
    """Test cases for the SweepService class."""

    def setup_method(self):
        """Set up test fixtures."""
        self.service = SweepService()
        self.engine = tiny_engine_config()
        self.trace = shared_context_trace()

    def test_jobs_must_be_positive(self):
        with pytest.raises(ValueError, match="jobs"):
            SweepService(jobs=0)

    def test_sweep_page(self):
        rows = self.service.sweep_page(self.engine, self.trace, [1, 4])

        assert [row["page_size"] for row in rows] == [1, 4]
        assert all(set(MATRIX_COLUMNS) <= set(row) for row in rows)

    def test_ablate_enumerates_subsets(self):
        """Test that every subset runs, all disabled first."""
        rows = self.service.ablate(self.engine, self.trace, ["deferral", "dedup"])

        assert [(row["deferral"], row["dedup"]) for row in rows] == [
            (False, False),
            (False, True),
            (True, False),
            (True, True),
        ]

    def test_ablate_unknown_feature(self):
        with pytest.raises(ValueError, match="Unknown feature"):
            self.service.ablate(self.engine, self.trace, ["prefetch"])

    def test_compare_crosses_patterns(self):
        rows = self.service.compare(
            self.engine, self.trace, ["dma", "oracle"], [Pattern.MIN_DISTANCE, Pattern.MAX_DISTANCE]
        )

        assert [(row["backend"], row["pattern"]) for row in rows] == [
            ("dma", "min"),
            ("dma", "max"),
            ("oracle", "min"),
            ("oracle", "max"),
        ]

    def test_compare_lays_out_host_per_backend(self, monkeypatch):
        """Test that each compared backend runs on its own host layout."""
        monkeypatch.setattr(self.service, "run_points", lambda points: points)
        engine = hardware_profile("h200-pcie5").engine_config(backend="gpu", with_disk=False)

        points = self.service.compare(engine, self.trace, ["dma", "gpu", "oracle"])

        layouts = {point.axes["backend"]: point.engine.tier_spec(TierId.HOST).layout for point in points}
        assert layouts == {"dma": Layout.LAYER_FIRST, "gpu": Layout.PAGE_FIRST, "oracle": Layout.PAGE_FIRST}
        assert isinstance(points[0].engine.backend, DmaCopyBackend)

    def test_sweep_rate_with_workload(self):
        workload = WorkloadSpec(
            num_contexts=2,
            queries_per_context=LengthDistribution(2.0, 0.0),
            context_len=LengthDistribution(50.0),
            query_len=LengthDistribution(5.0),
            output_len=LengthDistribution(2.0),
            seed=3,
        )

        rows = self.service.sweep_rate(self.engine, [1.0, 4.0], workload=workload)

        assert [row["rate"] for row in rows] == [1.0, 4.0]

    def test_sweep_rate_with_trace(self):
        rows = self.service.sweep_rate(self.engine, [10.0], trace=self.trace)

        assert len(rows) == 1

    def test_sweep_rate_needs_one_source(self):
        with pytest.raises(ValueError, match="exactly one"):
            self.service.sweep_rate(self.engine, [1.0])

    def test_sweep_rate_rejects_zero(self):
        with pytest.raises(ValueError, match="rates must be positive"):
            self.service.sweep_rate(self.engine, [0.0], trace=self.trace)
