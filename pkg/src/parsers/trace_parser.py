"""
Trace parser for the KV-tier simulator.

This module provides functionality for reading JSON-lines workload traces,
one TraceRecord per line, and validating the conversation dependencies they
declare.
"""

import json
import logging
import os
from typing import Any, Dict, Iterable, List

import networkx as nx

from ..core.exceptions import TraceParseError, TraceValidationError
from ..core.request import TraceRecord

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("id", "arrival_s", "context_id", "context_len", "query_len", "output_len")
OPTIONAL_FIELDS = ("round", "depends_on")


class TraceParser:
    """
    Parser for JSON-lines trace files.
    """

    def parse_file(self, file_path: str) -> List[TraceRecord]:
        """
        Parse and validate a trace file.

        Args:
            file_path: Path to the trace

        Returns:
            Records sorted by arrival, ties kept in file order

        Raises:
            FileNotFoundError: If the file does not exist
            TraceParseError: On a malformed line
            TraceValidationError: On duplicate ids, dangling or cyclic dependencies
        """
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"Trace file not found: {file_path}")
        with open(file_path, "r", encoding="utf-8") as handle:
            records = self.parse_lines(handle)
        logger.info("Parsed %d trace records from %s", len(records), file_path)
        return records

    def parse_lines(self, lines: Iterable[str]) -> List[TraceRecord]:
        records = [
            self._parse_line(line, number) for number, line in enumerate(lines, start=1) if line.strip()
        ]
        self.validate(records)
        return sorted(records, key=lambda record: record.arrival_s)

    def _parse_line(self, line: str, number: int) -> TraceRecord:
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceParseError(number, f"invalid JSON ({e.msg})")
        if not isinstance(data, dict):
            raise TraceParseError(number, "expected a JSON object")

        missing = [name for name in REQUIRED_FIELDS if name not in data]
        if missing:
            raise TraceParseError(number, f"missing field(s): {', '.join(missing)}")
        unknown = sorted(set(data) - set(REQUIRED_FIELDS) - set(OPTIONAL_FIELDS))
        if unknown:
            raise TraceParseError(number, f"unknown field(s): {', '.join(unknown)}")

        for name in ("context_len", "query_len", "output_len", "round"):
            if name in data and not _is_int(data[name]):
                raise TraceParseError(number, f"{name} must be an integer, got {data[name]!r}")
        if not _is_number(data["arrival_s"]):
            raise TraceParseError(number, f"arrival_s must be a number, got {data['arrival_s']!r}")
        depends_on = data.get("depends_on")
        if depends_on is not None and not isinstance(depends_on, str):
            raise TraceParseError(number, "depends_on must be a string or null")

        try:
            return TraceRecord(
                id=str(data["id"]),
                arrival_s=float(data["arrival_s"]),
                context_id=str(data["context_id"]),
                context_len=data["context_len"],
                query_len=data["query_len"],
                output_len=data["output_len"],
                round=data.get("round", 0),
                depends_on=depends_on,
            )
        except ValueError as e:
            raise TraceParseError(number, str(e))

    @staticmethod
    def validate(records: List[TraceRecord]) -> None:
        """
        Check ids and conversation dependencies.

        Raises:
            TraceValidationError: On duplicate ids, a depends_on naming no
                record, a dependency cycle or rounds out of chain order
        """
        by_id: Dict[str, TraceRecord] = {}
        for record in records:
            if record.id in by_id:
                raise TraceValidationError(f"Duplicate request id {record.id}")
            by_id[record.id] = record

        graph = nx.DiGraph()
        graph.add_nodes_from(by_id)
        for record in records:
            if record.depends_on is None:
                continue
            if record.depends_on not in by_id:
                raise TraceValidationError(f"{record.id} depends on unknown request {record.depends_on}")
            graph.add_edge(record.depends_on, record.id)
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            cycle = None
        if cycle:
            raise TraceValidationError(f"Dependency cycle: {' -> '.join(edge[0] for edge in cycle)}")

        for parent, child in graph.edges:
            if by_id[child].round <= by_id[parent].round:
                raise TraceValidationError(
                    f"{child} (round {by_id[child].round}) must follow {parent} (round {by_id[parent].round})"
                )


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)
