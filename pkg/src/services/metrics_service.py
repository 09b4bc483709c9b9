"""
Metrics aggregation and report output.

This module provides the MetricsService, which turns the raw engine log into a
SimReport (per-request rows, per-batch rows, aggregate statistics) and writes
the report artifacts with stable formatting.
"""

import logging
import os
from typing import Any, Dict, List, Sequence

import numpy as np

from ..core.exceptions import EmptyReportError, InvariantViolationError
from ..core.report import AggregateStats, BatchRecord, RequestRecord, SimReport
from ..core.request import Request
from ..utils.file_utils import write_csv_data, write_json, write_jsonl

logger = logging.getLogger(__name__)

REQUEST_COLUMNS = [
    "id",
    "arrival",
    "ttft",
    "e2e",
    "device_hit_tokens",
    "host_hit_tokens",
    "disk_hit_tokens",
    "recomputed_tokens",
    "deferrals",
    "context_tokens",
    "output_tokens",
]
BATCH_COLUMNS = [
    "batch",
    "start",
    "compute_tokens",
    "host_load_tokens",
    "device_hit_tokens",
    "ratio",
    "wall",
    "stall",
    "bubble_steps",
    "requests",
    "bundle_hits",
]
MATRIX_COLUMNS = [
    "mean_ttft",
    "p50_ttft",
    "p90_ttft",
    "throughput",
    "stall_fraction",
    "hit_rate",
    "deferrals",
    "bundle_hits",
]


def nearest_rank(values: Sequence[float], quantile: float) -> float:
    """
    Nearest-rank quantile: the smallest value with at least quantile of the
    samples at or below it.
    """
    if not values:
        raise EmptyReportError("no samples to take a quantile of")
    if not 0.0 < quantile <= 1.0:
        raise ValueError("quantile must lie in (0, 1]")
    ordered = np.sort(np.asarray(values, dtype=float))
    rank = int(np.ceil(quantile * len(ordered) - 1e-9))
    return float(ordered[max(rank, 1) - 1])


class MetricsService:
    """Aggregates engine logs and writes report artifacts."""

    def aggregate(self, log) -> SimReport:
        """
        Build the SimReport of a completed run.

        Args:
            log: EngineLog of the run

        Returns:
            Report with rows for every request and batch; aggregates skip the
            first log.warmup_requests requests

        Raises:
            EmptyReportError: If no request finished
            InvariantViolationError: If a request's context tokens do not
                partition into hits and recomputation
        """
        per_request = [self.request_record(request) for request in log.requests if request.finished_at is not None]
        report = SimReport(
            per_request=per_request,
            per_batch=list(log.batches),
            scheduler_log=list(log.scheduler_log),
            decode_steps=log.decode_steps,
            warmup_requests=log.warmup_requests,
        )
        report.aggregate = self.summarize(per_request, report.per_batch, log.warmup_requests)
        logger.info(
            "Aggregated %d requests over %d batches: mean TTFT %.4f s, throughput %.2f tok/s",
            report.aggregate.requests, len(report.per_batch), report.aggregate.mean_ttft, report.aggregate.throughput,
        )
        return report

    @staticmethod
    def request_record(request: Request) -> RequestRecord:
        record = RequestRecord(
            id=request.id,
            arrival=request.arrival,
            ttft=request.ttft,
            e2e=request.e2e,
            context_tokens=request.context_len,
            device_hit_tokens=request.device_hit_tokens,
            host_hit_tokens=request.host_hit_tokens,
            disk_hit_tokens=request.disk_hit_tokens,
            recomputed_tokens=request.recomputed_tokens,
            output_tokens=request.output_len,
            deferrals=request.deferrals,
        )
        if record.hit_tokens + record.recomputed_tokens != record.context_tokens:
            raise InvariantViolationError(
                f"{request.id}: {record.hit_tokens} hit + {record.recomputed_tokens} recomputed "
                f"!= {record.context_tokens} context tokens"
            )
        return record

    @staticmethod
    def summarize(
        per_request: Sequence[RequestRecord], per_batch: Sequence[BatchRecord], warmup_requests: int = 0
    ) -> AggregateStats:
        """Aggregate statistics recomputed from report rows."""
        measured = list(per_request[warmup_requests:])
        if not measured:
            raise EmptyReportError(
                f"no finished requests to aggregate ({len(per_request)} finished, {warmup_requests} warm-up)"
            )
        ttfts = [row.ttft for row in measured]
        first_arrival = min(row.arrival for row in measured)
        last_finish = max(row.arrival + row.e2e for row in measured)
        makespan = last_finish - first_arrival
        output_tokens = sum(row.output_tokens for row in measured)
        context_tokens = sum(row.context_tokens for row in measured)
        wall = sum(row.wall for row in per_batch)
        stall = sum(row.stall for row in per_batch)
        return AggregateStats(
            requests=len(measured),
            mean_ttft=float(np.mean(ttfts)),
            p50_ttft=nearest_rank(ttfts, 0.5),
            p90_ttft=nearest_rank(ttfts, 0.9),
            throughput=output_tokens / makespan if makespan > 0 else 0.0,
            stall_fraction=min(stall / wall, 1.0) if wall > 0 else 0.0,
            hit_rate=sum(row.hit_tokens for row in measured) / context_tokens if context_tokens else 0.0,
            deferrals=sum(row.deferrals for row in measured),
            bundle_hits=sum(row.bundle_hits for row in per_batch),
            makespan=makespan,
        )

    @staticmethod
    def matrix_row(report: SimReport, **axes: Any) -> Dict[str, Any]:
        """One sweep-matrix row: the point's axis values, then its aggregates."""
        row: Dict[str, Any] = dict(axes)
        for column in MATRIX_COLUMNS:
            row[column] = getattr(report.aggregate, column)
        return row

    def write_report(self, report: SimReport, output_directory: str) -> Dict[str, str]:
        """
        Write report.json, requests.csv, batches.csv and scheduler.jsonl.

        Returns:
            Artifact name to path
        """
        os.makedirs(output_directory, exist_ok=True)
        paths = {
            "report": os.path.join(output_directory, "report.json"),
            "requests": os.path.join(output_directory, "requests.csv"),
            "batches": os.path.join(output_directory, "batches.csv"),
            "scheduler": os.path.join(output_directory, "scheduler.jsonl"),
        }
        write_json(report.to_dict(), paths["report"])
        write_csv_data(
            [{column: getattr(row, column) for column in REQUEST_COLUMNS} for row in report.per_request],
            paths["requests"],
            REQUEST_COLUMNS,
        )
        write_csv_data(
            [{column: getattr(row, column) for column in BATCH_COLUMNS} for row in report.per_batch],
            paths["batches"],
            BATCH_COLUMNS,
        )
        write_jsonl(report.scheduler_log, paths["scheduler"])
        logger.info("Report written to %s", output_directory)
        return paths

    @staticmethod
    def write_matrix(rows: List[Dict[str, Any]], file_path: str) -> str:
        """Write sweep rows; axis columns first, in first-row order."""
        headers = [key for key in rows[0] if key not in MATRIX_COLUMNS] + MATRIX_COLUMNS if rows else MATRIX_COLUMNS
        write_csv_data(rows, file_path, headers)
        logger.info("Matrix of %d points written to %s", len(rows), file_path)
        return file_path
