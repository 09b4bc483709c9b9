"""
Trace records and serving requests.

A TraceRecord is the on-disk description of a request (lengths only). A Request
is the simulated entity built from it, carrying concrete token IDs and the
state the engine tracks while serving it.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from .tier import PageRef

TokenSeq = Tuple[int, ...]


class RequestState(str, Enum):
    QUEUED = "queued"
    DEFERRED = "deferred"
    SCHEDULED = "scheduled"
    PREFILLING = "prefilling"
    DECODING = "decoding"
    FINISHED = "finished"


@dataclass(frozen=True)
class TraceRecord:
    """
    One line of a workload trace.

    Attributes:
        id: Unique request identifier
        arrival_s: Arrival time in seconds
        context_id: Identifier of the shared context (or conversation)
        context_len: Context tokens
        query_len: New tokens specific to this request
        output_len: Tokens to generate
        round: Conversation round, 0 for single-turn requests
        depends_on: Id of the previous round, if any
    """

    id: str
    arrival_s: float
    context_id: str
    context_len: int
    query_len: int
    output_len: int
    round: int = 0
    depends_on: Optional[str] = None

    def __post_init__(self):
        if self.arrival_s < 0:
            raise ValueError(f"{self.id}: arrival_s must be non-negative")
        if self.context_len < 0 or self.query_len < 0:
            raise ValueError(f"{self.id}: lengths must be non-negative")
        if self.context_len + self.query_len < 1:
            raise ValueError(f"{self.id}: context_len + query_len must be at least 1")
        if self.output_len < 1:
            raise ValueError(f"{self.id}: output_len must be at least 1")
        if self.round < 0:
            raise ValueError(f"{self.id}: round must be non-negative")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "arrival_s": self.arrival_s,
            "context_id": self.context_id,
            "context_len": self.context_len,
            "query_len": self.query_len,
            "output_len": self.output_len,
            "round": self.round,
            "depends_on": self.depends_on,
        }


@dataclass
class Request:
    """
    A serving request inside the simulation.

    Attributes:
        id: Unique identifier
        arrival: Arrival time in seconds (for dependent rounds, the earliest time)
        context_tokens: Shared-context token IDs
        query_tokens: Request-specific token IDs
        output_len: Tokens to generate
        state: Lifecycle state
        depends_on: Id of the previous conversation round
        output_tokens: Token IDs the request generates when they are known in
            advance (conversation rounds), else empty
        order: Position in the trace, used as the FIFO tie-breaker
    """

    id: str
    arrival: float
    context_tokens: TokenSeq
    query_tokens: TokenSeq
    output_len: int
    state: RequestState = RequestState.QUEUED
    depends_on: Optional[str] = None
    output_tokens: TokenSeq = ()
    order: int = 0
    thinking_time: float = 0.0

    # Accounting filled in by the engine
    deferrals: int = 0
    admitted_at: Optional[float] = None
    first_token_at: Optional[float] = None
    finished_at: Optional[float] = None
    device_hit_tokens: int = 0
    host_hit_tokens: int = 0
    disk_hit_tokens: int = 0
    staged_tokens: int = 0
    recomputed_tokens: int = 0
    generated: int = 0
    held_pages: List[PageRef] = field(default_factory=list)
    pinned: Any = None

    def __post_init__(self):
        self.context_tokens = tuple(self.context_tokens)
        self.query_tokens = tuple(self.query_tokens)
        self.output_tokens = tuple(self.output_tokens)
        if not self.context_tokens and not self.query_tokens:
            raise ValueError(f"{self.id}: request has no tokens")
        if self.output_len < 1:
            raise ValueError(f"{self.id}: output_len must be at least 1")
        self.tokens: TokenSeq = self.context_tokens + self.query_tokens

    @property
    def context_len(self) -> int:
        return len(self.context_tokens)

    @property
    def prompt_len(self) -> int:
        return len(self.tokens)

    @property
    def sort_key(self) -> Tuple[float, int, str]:
        return (self.arrival, self.order, self.id)

    @property
    def ttft(self) -> Optional[float]:
        if self.first_token_at is None:
            return None
        return self.first_token_at - self.arrival

    @property
    def e2e(self) -> Optional[float]:
        if self.finished_at is None:
            return None
        return self.finished_at - self.arrival

    def __repr__(self) -> str:
        return (
            f"Request(id='{self.id}', arrival={self.arrival}, "
            f"prompt={self.prompt_len}, state={self.state.value})"
        )
