"""
Workload generation and trace handling.

This module provides the WorkloadService, which generates synthetic traces
(Poisson arrivals over shared contexts, or multi-turn conversations), rearranges
single-turn traces by cache distance, reads and writes JSON-lines traces, and
turns trace records into requests with concrete token IDs.
"""

import logging
import zlib
from collections import OrderedDict
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..core.exceptions import UnsupportedPatternError
from ..core.request import Request, TraceRecord
from ..core.sim_config import LengthDistribution, Pattern, WorkloadSpec
from ..parsers.trace_parser import TraceParser
from ..utils.file_utils import stable_float, write_jsonl

logger = logging.getLogger(__name__)

VOCAB_SIZE = 32000
QUERY_MARKER = 2**31
TOKEN_BLOCK = 4096


def _crc(value: str) -> int:
    return zlib.crc32(value.encode("utf-8"))


def context_stream(seed: int, context_id: str, length: int) -> np.ndarray:
    """
    Token IDs of a context, a pure function of (seed, context_id).

    The first token marks the context; the rest are drawn block by block, so a
    shorter stream is always a prefix of a longer one.
    """
    crc = _crc(context_id)
    blocks = [np.array([VOCAB_SIZE + crc], dtype=np.int64)]
    remaining = length - 1
    index = 0
    while remaining > 0:
        rng = np.random.default_rng([seed, crc, index])
        size = min(TOKEN_BLOCK, remaining)
        blocks.append(rng.integers(0, VOCAB_SIZE, size=size, dtype=np.int64))
        remaining -= size
        index += 1
    return np.concatenate(blocks)[: max(length, 0)]


def query_stream(seed: int, request_id: str, length: int) -> np.ndarray:
    """Token IDs of a single-turn query; the first token is unique to the request."""
    if length <= 0:
        return np.zeros(0, dtype=np.int64)
    crc = _crc(request_id)
    rng = np.random.default_rng([seed, crc])
    head = np.array([VOCAB_SIZE + QUERY_MARKER + crc], dtype=np.int64)
    return np.concatenate([head, rng.integers(0, VOCAB_SIZE, size=length - 1, dtype=np.int64)])


def _draw(rng: np.random.Generator, distribution: LengthDistribution) -> int:
    return int(rng.integers(distribution.low, distribution.high + 1))


class WorkloadService:
    """
    Service for building workloads.
    """

    def __init__(self):
        self.trace_parser = TraceParser()

    def generate(self, spec: WorkloadSpec) -> List[TraceRecord]:
        """
        Generate a synthetic trace.

        Single-turn workloads draw a context per context id and several queries
        against it, arranged by spec.pattern. Multi-turn workloads chain the
        queries of a context as conversation rounds, each round's context
        holding the previous rounds' queries and outputs.

        Args:
            spec: Workload description

        Returns:
            Records in arrival order
        """
        rng = np.random.default_rng(spec.seed)
        if spec.multi_turn:
            trace = self._generate_conversations(spec, rng)
        else:
            trace = self._generate_queries(spec, rng)
        logger.info("Generated %d requests over %d contexts", len(trace), spec.num_contexts)
        return trace

    def _generate_queries(self, spec: WorkloadSpec, rng: np.random.Generator) -> List[TraceRecord]:
        drafts = []
        for context in range(spec.num_contexts):
            context_id = f"ctx{context:04d}"
            context_len = _draw(rng, spec.context_len)
            for _ in range(_draw(rng, spec.queries_per_context)):
                drafts.append((context_id, context_len, _draw(rng, spec.query_len), _draw(rng, spec.output_len)))

        order = self._arrangement([draft[0] for draft in drafts], spec.pattern, rng)
        arrivals = self._poisson_arrivals(rng, spec.rate, len(drafts))
        trace = []
        for position, index in enumerate(order):
            context_id, context_len, query_len, output_len = drafts[index]
            trace.append(
                TraceRecord(
                    id=f"q{position:06d}",
                    arrival_s=arrivals[position],
                    context_id=context_id,
                    context_len=context_len,
                    query_len=max(query_len, 1 - context_len),
                    output_len=output_len,
                )
            )
        return trace

    def _generate_conversations(self, spec: WorkloadSpec, rng: np.random.Generator) -> List[TraceRecord]:
        starts = self._poisson_arrivals(rng, spec.rate, spec.num_contexts)
        trace = []
        for conversation in range(spec.num_contexts):
            context_id = f"conv{conversation:04d}"
            context_len = _draw(rng, spec.context_len)
            arrival = starts[conversation]
            previous: Optional[str] = None
            for round_index in range(_draw(rng, spec.queries_per_context)):
                query_len = max(_draw(rng, spec.query_len), 1 - context_len)
                output_len = _draw(rng, spec.output_len)
                record_id = f"{context_id}-r{round_index:02d}"
                trace.append(
                    TraceRecord(
                        id=record_id,
                        arrival_s=stable_float(arrival),
                        context_id=context_id,
                        context_len=context_len,
                        query_len=query_len,
                        output_len=output_len,
                        round=round_index,
                        depends_on=previous,
                    )
                )
                previous = record_id
                context_len += query_len + output_len
                arrival += spec.thinking_time
        return sorted(trace, key=lambda record: record.arrival_s)

    @staticmethod
    def _poisson_arrivals(rng: np.random.Generator, rate: float, count: int) -> List[float]:
        gaps = rng.exponential(1.0 / rate, size=count)
        return [stable_float(float(value)) for value in np.cumsum(gaps)]

    @staticmethod
    def _arrangement(context_ids: Sequence[str], pattern: Pattern, rng: np.random.Generator) -> List[int]:
        """Positions of context_ids arranged by cache distance."""
        groups: Dict[str, List[int]] = OrderedDict()
        for index, context_id in enumerate(context_ids):
            groups.setdefault(context_id, []).append(index)
        if pattern == Pattern.MIN_DISTANCE:
            return [index for members in groups.values() for index in members]
        if pattern == Pattern.MAX_DISTANCE:
            order = []
            queues = [list(members) for members in groups.values()]
            while any(queues):
                for queue in queues:
                    if queue:
                        order.append(queue.pop(0))
            return order
        return [int(index) for index in rng.permutation(len(context_ids))]

    def apply_pattern(self, trace: List[TraceRecord], pattern: Pattern, seed: int = 0) -> List[TraceRecord]:
        """
        Rearrange a single-turn trace by cache distance.

        The arrival timestamps of the original trace are handed out in order to
        the rearranged records, so the inter-arrival sequence is unchanged.

        Args:
            trace: Single-turn records
            pattern: Target arrangement
            seed: Seed of the Shuffle permutation

        Returns:
            The rearranged trace

        Raises:
            UnsupportedPatternError: If the trace holds conversation rounds
        """
        if any(record.depends_on is not None or record.round > 0 for record in trace):
            raise UnsupportedPatternError(
                f"Pattern {pattern.value} needs a single-turn trace; conversation rounds cannot be reordered"
            )
        ordered = sorted(trace, key=lambda record: record.arrival_s)
        arrivals = [record.arrival_s for record in ordered]
        order = self._arrangement([record.context_id for record in ordered], pattern, np.random.default_rng(seed))
        return [
            TraceRecord(
                id=ordered[index].id,
                arrival_s=arrivals[position],
                context_id=ordered[index].context_id,
                context_len=ordered[index].context_len,
                query_len=ordered[index].query_len,
                output_len=ordered[index].output_len,
            )
            for position, index in enumerate(order)
        ]

    def load_trace(self, file_path: str) -> List[TraceRecord]:
        return self.trace_parser.parse_file(file_path)

    def write_trace(self, trace: List[TraceRecord], file_path: str) -> int:
        """Write a trace as JSON lines; returns the number of records."""
        count = write_jsonl((record.to_dict() for record in trace), file_path)
        logger.info("Wrote %d trace records to %s", count, file_path)
        return count

    def build_requests(self, trace: List[TraceRecord], seed: int = 0, thinking_time: float = 0.0) -> List[Request]:
        """
        Requests with concrete tokens for a trace.

        Context tokens come from the context's stream. Conversation rounds take
        their query and output tokens from the same stream, so round k+1 finds
        round k's prompt and output as its prefix. Single-turn queries get
        tokens unique to the request.

        Args:
            trace: Records to build
            seed: Token seed
            thinking_time: Minimum gap between a round finishing and its
                successor arriving

        Returns:
            Requests in trace order
        """
        conversational = {record.context_id for record in trace if record.depends_on is not None or record.round > 0}
        lengths: Dict[str, int] = {}
        for record in trace:
            needed = record.context_len
            if record.context_id in conversational:
                needed += record.query_len + record.output_len
            lengths[record.context_id] = max(lengths.get(record.context_id, 0), needed)
        streams = {
            context_id: tuple(int(token) for token in context_stream(seed, context_id, length))
            for context_id, length in lengths.items()
        }

        requests = []
        for order, record in enumerate(trace):
            stream = streams[record.context_id]
            context = stream[: record.context_len]
            output: tuple = ()
            if record.context_id in conversational:
                query_end = record.context_len + record.query_len
                query = stream[record.context_len: query_end]
                output = stream[query_end: query_end + record.output_len]
            else:
                query = tuple(int(token) for token in query_stream(seed, record.id, record.query_len))
            requests.append(
                Request(
                    id=record.id,
                    arrival=record.arrival_s,
                    context_tokens=context,
                    query_tokens=query,
                    output_len=record.output_len,
                    depends_on=record.depends_on,
                    output_tokens=output,
                    order=order,
                    thinking_time=thinking_time if record.depends_on is not None else 0.0,
                )
            )
        return requests

    @staticmethod
    def summarize(trace: List[TraceRecord]) -> Dict[str, float]:
        """Summary statistics of a trace."""
        if not trace:
            return {"requests": 0}
        frame = pd.DataFrame([record.to_dict() for record in trace])
        frame["input_len"] = frame["context_len"] + frame["query_len"]
        return {
            "requests": int(len(frame)),
            "contexts": int(frame["context_id"].nunique()),
            "mean_context_len": float(frame["context_len"].mean()),
            "mean_input_len": float(frame["input_len"].mean()),
            "mean_output_len": float(frame["output_len"].mean()),
            "duration_s": float(frame["arrival_s"].max() - frame["arrival_s"].min()),
        }
