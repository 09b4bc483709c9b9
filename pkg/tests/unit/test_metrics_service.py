"""
Unit tests for the MetricsService class.
"""

import json

import pytest

from src.core.exceptions import EmptyReportError, InvariantViolationError
from src.core.report import BatchRecord, RequestRecord
from src.core.request import Request
from src.services.engine import EngineLog
from src.services.metrics_service import MATRIX_COLUMNS, MetricsService, nearest_rank
from src.utils.file_utils import read_csv_data


def request_row(id, arrival, ttft, e2e, output, hits=0, recomputed=100, deferrals=0):
    return RequestRecord(
        id=id,
        arrival=arrival,
        ttft=ttft,
        e2e=e2e,
        context_tokens=hits + recomputed,
        device_hit_tokens=hits,
        host_hit_tokens=0,
        disk_hit_tokens=0,
        recomputed_tokens=recomputed,
        output_tokens=output,
        deferrals=deferrals,
    )


def batch_row(index, wall, stall, bundle_hits=0):
    return BatchRecord(
        batch=index,
        start=float(index),
        compute_tokens=100,
        host_load_tokens=0,
        device_hit_tokens=0,
        ratio=0.0,
        wall=wall,
        stall=stall,
        bubble_steps=0,
        requests="a",
        bundle_hits=bundle_hits,
    )


def finished_request(id, arrival, context, hits, recomputed):
    request = Request(id=id, arrival=arrival, context_tokens=tuple(range(context)), query_tokens=(1,), output_len=2)
    request.device_hit_tokens = hits
    request.recomputed_tokens = recomputed
    request.first_token_at = arrival + 0.5
    request.finished_at = arrival + 1.0
    return request


class TestNearestRank:
    """Test cases for nearest_rank."""

    def test_quantiles(self):
        values = list(range(10, 0, -1))

        assert nearest_rank(values, 0.5) == 5.0
        assert nearest_rank(values, 0.9) == 9.0
        assert nearest_rank(values, 1.0) == 10.0
        assert nearest_rank([3.0, 1.0, 2.0], 0.5) == 2.0

    def test_single_sample(self):
        assert nearest_rank([4.0], 0.01) == 4.0

    def test_empty(self):
        with pytest.raises(EmptyReportError):
            nearest_rank([], 0.5)

    def test_quantile_range(self):
        with pytest.raises(ValueError, match="quantile"):
            nearest_rank([1.0], 0.0)


class TestMetricsService:
    """Test cases for the MetricsService class."""

    def setup_method(self):
        """Set up test fixtures."""
        self.service = MetricsService()
        self.rows = [
            request_row("a", 0.0, 1.0, 2.0, 4, hits=60, recomputed=40),
            request_row("b", 1.0, 3.0, 5.0, 6, deferrals=2),
        ]
        self.batches = [batch_row(0, 2.0, 0.5, bundle_hits=1), batch_row(1, 2.0, 0.5, bundle_hits=1)]

    def test_summarize(self):
        """Test aggregates recomputed from rows."""
        stats = self.service.summarize(self.rows, self.batches)

        assert stats.requests == 2
        assert stats.mean_ttft == 2.0
        assert stats.p50_ttft == 1.0
        assert stats.p90_ttft == 3.0
        assert stats.makespan == 6.0
        assert stats.throughput == pytest.approx(10 / 6)
        assert stats.stall_fraction == 0.25
        assert stats.hit_rate == 0.3
        assert stats.deferrals == 2
        assert stats.bundle_hits == 2

    def test_summarize_skips_warmup(self):
        stats = self.service.summarize(self.rows, self.batches, warmup_requests=1)

        assert stats.requests == 1
        assert stats.makespan == 5.0
        assert stats.throughput == pytest.approx(6 / 5)
        assert stats.hit_rate == 0.0

    def test_summarize_without_measured_requests(self):
        with pytest.raises(EmptyReportError, match="2 warm-up"):
            self.service.summarize(self.rows, self.batches, warmup_requests=2)

    def test_stall_fraction_without_batches(self):
        assert self.service.summarize(self.rows, []).stall_fraction == 0.0

    def test_request_record_conservation(self):
        """Test that hits plus recomputation must cover the context."""
        request = finished_request("r", 0.0, 100, 60, 30)

        with pytest.raises(InvariantViolationError, match="60 hit \\+ 30 recomputed != 100"):
            self.service.request_record(request)

    def test_aggregate_skips_unfinished(self):
        done = finished_request("done", 0.0, 10, 10, 0)
        pending = Request(id="pending", arrival=0.0, context_tokens=(1, 2), query_tokens=(), output_len=1)
        log = EngineLog(requests=[done, pending], batches=[batch_row(0, 1.0, 0.0)], decode_steps=3)

        report = self.service.aggregate(log)

        assert [row.id for row in report.per_request] == ["done"]
        assert report.aggregate.hit_rate == 1.0
        assert report.aggregate.p50_ttft == 0.5
        assert report.decode_steps == 3

    def test_aggregate_empty_log(self):
        with pytest.raises(EmptyReportError):
            self.service.aggregate(EngineLog())

    def test_write_report(self, tmp_path):
        log = EngineLog(
            requests=[finished_request("r1", 0.0, 10, 4, 6), finished_request("r2", 0.25, 10, 10, 0)],
            batches=[batch_row(0, 1.0, 0.25)],
            scheduler_log=[{"round": 0, "deferred": []}],
        )
        report = self.service.aggregate(log)

        paths = self.service.write_report(report, str(tmp_path / "run"))

        with open(paths["report"]) as handle:
            document = json.load(handle)
        assert document["config_version"] == 1
        assert document["aggregate"]["requests"] == 2
        requests = read_csv_data(paths["requests"])
        assert list(requests["id"]) == ["r1", "r2"]
        assert list(requests["recomputed_tokens"]) == [6, 0]
        assert list(read_csv_data(paths["batches"])["stall"]) == [0.25]
        with open(paths["scheduler"]) as handle:
            assert handle.read() == '{"deferred": [], "round": 0}\n'

    def test_matrix(self, tmp_path):
        report = self.service.aggregate(EngineLog(requests=[finished_request("r", 0.0, 10, 0, 10)]))
        row = self.service.matrix_row(report, page_size=32, pattern="min")

        path = self.service.write_matrix([row], str(tmp_path / "matrix.csv"))

        frame = read_csv_data(path)
        assert list(frame.columns) == ["page_size", "pattern"] + MATRIX_COLUMNS
        assert frame["page_size"][0] == 32
        assert frame["throughput"][0] == 2.0

    def test_read_missing_csv(self):
        with pytest.raises(FileNotFoundError, match="CSV file not found"):
            read_csv_data("nonexistent.csv")
