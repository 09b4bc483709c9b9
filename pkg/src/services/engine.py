"""
Discrete-event simulation of a serving engine over tiered KV memory.

This module provides the SimulationEngine, which replays requests through the
scheduler, executes prefill batches with layer-wise load/compute pipelining,
runs decode steps with continuous batching, and drives the cache controller:
host loads, background backups, eviction with write-back and cancellable disk
prefetch.
"""

import heapq
import itertools
import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Deque, Dict, List, Optional, Sequence, Set, Tuple

from ..core.batch import BatchEstimate, BatchPlan, MemberPlan
from ..core.exceptions import (
    CapacityError,
    FatalSimulationError,
    PressureError,
    TraceValidationError,
)
from ..core.hiradix_node import EvictionPlan, HiRadixNode
from ..core.report import BatchRecord, SimReport
from ..core.request import Request, RequestState
from ..core.sim_config import ComputeModel, EngineConfig
from ..core.tier import PageRef, TierId
from ..core.transfer import GpuAssistBackend, IoBackendSpec, TransferJob
from .hiradix_tree import HiRadixTree, TransientEvent, common_prefix_len
from .io_model import backup_backend, interference_factors, plan_transfer, transfer_seconds
from .metrics_service import MetricsService
from .scheduler import Scheduler
from .tier_store import TierStore, transfer_chunk_size

logger = logging.getLogger(__name__)


class EventKind(str, Enum):
    ARRIVAL = "arrival"
    PREFILL_DONE = "prefill_done"
    DECODE_STEP_DONE = "decode_step_done"
    TRANSFER_DONE = "transfer_done"
    PREFETCH_DONE = "prefetch_done"
    BACKUP_DONE = "backup_done"


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    kind: EventKind
    payload: Any = None


def pipeline_wall_time(t_load: Sequence[float], t_comp: Sequence[float]) -> Tuple[float, float]:
    """
    Wall time and stall of a layer-wise pipelined prefill.

    Layer l computes once its own KV has loaded and layer l-1 has computed.

    Args:
        t_load: Per-layer load seconds
        t_comp: Per-layer compute seconds

    Returns:
        (wall, stall) where stall is wall minus total compute
    """
    if len(t_load) != len(t_comp) or not t_comp:
        raise ValueError("t_load and t_comp need one entry per layer")
    load_finish = 0.0
    comp_finish = 0.0
    for load, comp in zip(t_load, t_comp):
        load_finish += load
        comp_finish = max(comp_finish, load_finish) + comp
    return comp_finish, max(comp_finish - sum(t_comp), 0.0)


def decode_step_time(
    active_requests: int, active_tokens: int, model: ComputeModel, interference: float = 0.0
) -> float:
    """Seconds of one decode step over the active batch."""
    if active_requests < 0 or active_tokens < 0:
        raise ValueError("active counts must be non-negative")
    return (model.decode_step_base + model.decode_step_per_token * active_tokens) * (1.0 + interference)


def prefill_compute_seconds(batch: BatchPlan, model: ComputeModel) -> float:
    """Total compute of a prefill batch; attention spans each member's whole prompt."""
    total = 0.0
    for member in batch.members.values():
        new = member.compute_tokens
        attended = member.cached_tokens + member.shared_tokens + new
        total += model.prefill_token_cost * new + model.prefill_attn_cost * new * attended
    return total


def host_load_seconds(batch: BatchPlan, config: EngineConfig) -> float:
    """Seconds to load the batch's host-resident prefix tokens onto the device."""
    host = config.tier_spec(TierId.HOST)
    device = config.tier_spec(TierId.DEVICE)
    chunk = transfer_chunk_size(config.geometry, host.layout, device.layout)
    return transfer_seconds(
        batch.host_load_tokens * config.geometry.bytes_per_token,
        chunk,
        config.backend,
        config.link(TierId.DEVICE, TierId.HOST),
    )


def prefill_wall_time(
    batch: BatchPlan, config: EngineConfig, io_active: bool = False, load_factor: float = 1.0
) -> Tuple[float, float]:
    """
    Wall time and stall of a prefill batch under the configured models.

    Loads and compute are spread uniformly over the layers. Compute is slowed
    by the backend's prefill interference while a GPU-assisted transfer runs.

    Args:
        batch: Batch accounting
        config: Engine configuration
        io_active: Whether a GPU-assisted transfer outside this batch is running
        load_factor: Multiplier on load time (bubble-fill contention)

    Returns:
        (wall, stall) in seconds
    """
    layers = config.geometry.num_layers
    t_load = host_load_seconds(batch, config) * load_factor
    prefill_slowdown, _ = interference_factors(config.backend, io_active or t_load > 0)
    t_comp = prefill_compute_seconds(batch, config.compute) * (1.0 + prefill_slowdown)
    return pipeline_wall_time([t_load / layers] * layers, [t_comp / layers] * layers)


@dataclass
class _Dispatch:
    """Final accounting of one member when its batch starts."""

    request: Request
    member: MemberPlan
    committed_end: int
    device_missing: int
    own_tokens: int
    staged: int


@dataclass
class _RunningBatch:
    index: int
    dispatches: List[_Dispatch]
    start: float
    wall: float
    bubble_steps_left: int = 0

    @property
    def end(self) -> float:
        return self.start + self.wall


@dataclass
class _Copy:
    """A background copy whose result lands in the tree on completion."""

    job: TransferJob
    tokens: Tuple[int, ...]
    count: int
    pages: List[PageRef]
    request_id: Optional[str] = None


@dataclass
class EngineLog:
    """Raw outcome of a run, turned into a SimReport by the metrics service."""

    requests: List[Request] = field(default_factory=list)
    batches: List[BatchRecord] = field(default_factory=list)
    scheduler_log: List[Dict[str, Any]] = field(default_factory=list)
    decode_steps: int = 0
    warmup_requests: int = 0


class SimulationEngine:
    """
    Single-threaded discrete-event engine.

    Prefill batches take priority over decode steps; a decode step runs when
    no prefill is ready, except for bubble-fill steps that overlap a prefill's
    loading stall. The next batch is formed when a batch starts.
    """

    def __init__(self, config: EngineConfig):
        self.config = config
        self.geometry = config.geometry
        self.store = TierStore(config.geometry, config.tiers)
        self.tree = HiRadixTree(config.geometry, [spec.tier for spec in config.tiers])
        self.scheduler = Scheduler(self.tree, config.scheduler)
        self.log = EngineLog(warmup_requests=config.warmup_requests)
        self.clock = 0.0

        self._backup_backend = backup_backend(config.backend)
        self._events: List[Tuple[float, int, Event]] = []
        self._seq = itertools.count()
        self._requests: Dict[str, Request] = {}
        self._dependents: Dict[str, List[str]] = defaultdict(list)
        self._queue: List[Request] = []
        self._backlog: Deque[Request] = deque()
        self._inflight = 0
        self._decode_pool: List[Request] = []
        self._decoding = False
        self._running: Optional[_RunningBatch] = None
        self._prepared: Optional[BatchPlan] = None
        self._blocked: Optional[BatchPlan] = None
        self._copies: Dict[int, _Copy] = {}
        self._evicting: Set[int] = set()
        self._copy_ids = itertools.count()
        self._prefetches: Dict[str, int] = {}
        self._backup_free_at = 0.0
        self._load_until = 0.0
        self._batch_index = 0

    # ------------------------------------------------------------------ driver

    def run(self, requests: Sequence[Request]) -> SimReport:
        """
        Replay requests to completion.

        Args:
            requests: Requests with concrete tokens; dependent conversation
                rounds are released when their predecessor finishes

        Returns:
            The aggregated report

        Raises:
            TraceValidationError: On duplicate ids or unsatisfiable dependencies
            FatalSimulationError: If the simulation cannot make progress
        """
        self._load(requests)
        logger.info(
            "Simulating %d requests (backend=%s, page=%d)",
            len(self._requests), self.config.backend.name, self.geometry.page_size_tokens,
        )
        while self._events:
            now = self._events[0][0]
            self.clock = now
            self.tree.clock = now
            while self._events and self._events[0][0] == now:
                _, _, event = heapq.heappop(self._events)
                logger.debug("t=%.6f %s %s", event.time, event.kind.value, event.payload)
                self._handle(event)
            self._kick()

        unfinished = [r.id for r in self._requests.values() if r.state != RequestState.FINISHED]
        if unfinished:
            raise FatalSimulationError(f"Simulation stalled with {len(unfinished)} unfinished requests: {unfinished[:5]}")
        self.log.requests = sorted(self._requests.values(), key=lambda r: (r.order, r.id))
        return MetricsService().aggregate(self.log)

    def _load(self, requests: Sequence[Request]) -> None:
        for request in sorted(requests, key=lambda r: r.sort_key):
            if request.id in self._requests:
                raise TraceValidationError(f"Duplicate request id {request.id}")
            self._requests[request.id] = request
        for request in self._requests.values():
            if request.depends_on is None:
                self._push(request.arrival, EventKind.ARRIVAL, request.id)
                continue
            if request.depends_on not in self._requests:
                raise TraceValidationError(f"{request.id} depends on unknown request {request.depends_on}")
            self._dependents[request.depends_on].append(request.id)
        for request in self._requests.values():
            seen = set()
            node = request
            while node.depends_on is not None:
                if node.id in seen:
                    raise TraceValidationError(f"Dependency cycle through {node.id}")
                seen.add(node.id)
                node = self._requests[node.depends_on]

    def _push(self, time: float, kind: EventKind, payload: Any = None) -> None:
        seq = next(self._seq)
        heapq.heappush(self._events, (time, seq, Event(time, seq, kind, payload)))

    def _handle(self, event: Event) -> None:
        if event.kind == EventKind.ARRIVAL:
            self._on_arrival(self._requests[event.payload])
        elif event.kind == EventKind.PREFILL_DONE:
            self._on_prefill_done()
        elif event.kind == EventKind.DECODE_STEP_DONE:
            self._on_decode_step_done(*event.payload)
        elif event.kind == EventKind.TRANSFER_DONE:
            self._on_transfer_done(event.payload)
        elif event.kind == EventKind.PREFETCH_DONE:
            self._on_prefetch_done(event.payload)
        elif event.kind == EventKind.BACKUP_DONE:
            self._on_backup_done(event.payload)

    def _kick(self) -> None:
        """Start the next unit of GPU work if the GPU is free."""
        if self._running is not None or self._decoding:
            return
        plan = None
        if self._blocked is not None:
            plan, self._blocked = self._blocked, None
        elif self._prepared is not None:
            plan, self._prepared = self._prepared, None
        elif self._queue:
            plan = self._form()
        if plan is not None and self._dispatch(plan):
            return
        if self._decode_pool:
            self._start_decode_step(bubble=False)

    # --------------------------------------------------------------- requests

    def _on_arrival(self, request: Request) -> None:
        request.state = RequestState.QUEUED
        if self._inflight < self.config.max_inflight:
            self._admit(request)
        else:
            self._backlog.append(request)

    def _admit(self, request: Request) -> None:
        self._inflight += 1
        request.admitted_at = self.clock
        self._queue.append(request)
        if self.config.prefetch_enabled and self.store.has_tier(TierId.DISK):
            self._start_prefetch(request)

    def _finish(self, request: Request) -> None:
        request.state = RequestState.FINISHED
        request.finished_at = self.clock
        if request in self._decode_pool:
            self._decode_pool.remove(request)
        self.store.release_pages(request.held_pages)
        request.held_pages = []
        if request.output_tokens:
            self._insert_output(request)
        if request.pinned:
            self.tree.adjust_refs(request.pinned, -1)
            request.pinned = None
        self._inflight -= 1
        while self._backlog and self._inflight < self.config.max_inflight:
            self._admit(self._backlog.popleft())
        for dependent_id in self._dependents.get(request.id, []):
            dependent = self._requests[dependent_id]
            dependent.arrival = max(dependent.arrival, self.clock + dependent.thinking_time)
            self._push(dependent.arrival, EventKind.ARRIVAL, dependent.id)

    def _insert_output(self, request: Request) -> None:
        """Cache a finished round's prompt and output on the device; the prompt path must still be pinned."""
        sequence = request.tokens + request.output_tokens[: request.output_len]
        missing = self.tree.missing_tokens(sequence, TierId.DEVICE)
        pages = self._allocate(TierId.DEVICE, missing) if missing else []
        if pages is None:
            logger.debug("No device room to cache output of %s", request.id)
            return
        recount = self.tree.missing_tokens(sequence, TierId.DEVICE)
        if recount != missing:
            self.store.release_pages(pages)
            try:
                pages = self.store.allocate_pages(TierId.DEVICE, recount)
            except CapacityError:
                logger.debug("Eviction left no device room for output of %s", request.id)
                return
        self.tree.insert_committed(sequence, TierId.DEVICE, pages)
        self._schedule_backup(sequence)

    def _aligned(self, tokens: Sequence[int]) -> Tuple[int, ...]:
        return tuple(tokens[: self.geometry.aligned(len(tokens))])

    # ---------------------------------------------------------------- prefill

    def _form(self) -> Optional[BatchPlan]:
        plan, self._queue = self.scheduler.schedule(self._queue)
        return plan

    def _finalize(self, plan: BatchPlan, request: Request, earlier: List[_Dispatch]) -> _Dispatch:
        """
        Re-check a member against the tree as its batch starts.

        Tokens evicted since formation are recomputed; tokens committed since
        formation beyond the planned prefix are not reused (delay hits).
        """
        planned = plan.members[request.id]
        fresh = self.tree.match_prefix(request.tokens)
        host_end = fresh.device_tokens + fresh.host_tokens
        cached_end = min(planned.committed_tokens, host_end, request.prompt_len - 1)
        device_hit = min(fresh.device_tokens, cached_end)

        shared = 0
        if self.config.scheduler.dedup_enabled and planned.bundle_of in plan.members:
            shared = max(0, planned.bundle_prefix - cached_end)
        member = MemberPlan(
            request_id=request.id,
            device_tokens=device_hit,
            host_tokens=cached_end - device_hit,
            disk_tokens=max(0, fresh.committed_tokens - host_end),
            transient_tokens=fresh.transient_tokens,
            compute_tokens=request.prompt_len - cached_end - shared,
            shared_tokens=shared,
            bundle_of=planned.bundle_of if planned.bundle_of in plan.members else None,
            bundle_prefix=planned.bundle_prefix,
        )

        committed_end = fresh.committed_tokens
        covered = fresh.device_tokens
        for other in earlier:
            overlap = common_prefix_len(request.tokens, other.request.tokens)
            covered = max(covered, min(overlap, other.committed_end, committed_end))
        covered = self.geometry.aligned(covered)
        return _Dispatch(
            request=request,
            member=member,
            committed_end=committed_end,
            device_missing=max(0, committed_end - covered),
            own_tokens=request.prompt_len - committed_end,
            staged=min(request.staged_tokens, member.host_tokens),
        )

    def _pages_bytes(self, dispatches: List[_Dispatch]) -> int:
        pages = sum(
            self.geometry.pages_for(d.device_missing) + self.geometry.pages_for(d.own_tokens) for d in dispatches
        )
        return pages * self.geometry.page_bytes

    def _pending_device_writeback_bytes(self) -> int:
        return sum(
            self._copies[copy_id].job.bytes_total
            for copy_id in self._evicting
            if self._copies[copy_id].job.source == TierId.DEVICE
        )

    def handle_pressure(self, needed: int) -> List[TransferJob]:
        """
        Evict device-resident caches to free needed bytes.

        Returns:
            Write-back jobs started; their bytes free up when they complete

        Raises:
            PressureError: If unpinned caches cannot cover needed
        """
        plan = self.tree.evict(TierId.DEVICE, needed, self.clock)
        return self._apply_eviction(plan)

    def _dispatch(self, plan: BatchPlan) -> bool:
        """Start plan as the running prefill; False when it has to wait for memory."""
        members = [self._requests[request_id] for request_id in plan.requests]
        for request in members:
            if request.id in self._prefetches:
                self._cancel_prefetch(request)

        evicted = False
        while True:
            dispatches: List[_Dispatch] = []
            for request in members:
                dispatches.append(self._finalize(plan, request, dispatches))
            needed = self._pages_bytes(dispatches)
            free = self.store.free_bytes(TierId.DEVICE)
            if needed <= free:
                break
            shortfall = needed - free - self._pending_device_writeback_bytes()
            if shortfall <= 0:
                self._blocked = plan
                return False
            if not evicted:
                pins = [self._committed_path(request) for request in members]
                for path in pins:
                    self.tree.adjust_refs(path, 1)
                try:
                    self.handle_pressure(shortfall)
                    evicted = True
                    continue
                except PressureError as err:
                    shortfall = err.shortfall
                finally:
                    for path in pins:
                        self.tree.adjust_refs(path, -1)
            if len(members) > 1:
                plan.remove_last()
                dropped = members.pop()
                self._return_to_queue(dropped, members)
                logger.warning("Device pressure (%d B short): returning %s to the queue", shortfall, dropped.id)
                evicted = False
                continue
            if self._copies or self._decode_pool:
                self._blocked = plan
                return False
            raise FatalSimulationError(
                f"Device too small for request {members[0].id}: needs {needed} B, "
                f"{self.store.capacity(TierId.DEVICE)} B configured"
            )

        self._start_batch(plan, dispatches)
        return True

    def _committed_path(self, request: Request) -> List[HiRadixNode]:
        path = []
        for node in self.tree.match_prefix(request.tokens).node_path:
            if node.is_transient:
                break
            path.append(node)
        return path

    def _return_to_queue(self, request: Request, members: List[Request]) -> None:
        """Put a dropped member back at the queue head, aborting the marks only it owns."""
        if self.tree.transient_tokens(request.tokens):
            owners = members + self._queue
            keep = max((common_prefix_len(request.tokens, other.tokens) for other in owners), default=0)
            self.tree.transition_transient(request.tokens, TransientEvent.ABORT, keep=keep)
        request.state = RequestState.QUEUED
        self._queue.insert(0, request)

    def _start_batch(self, plan: BatchPlan, dispatches: List[_Dispatch]) -> None:
        executed = BatchPlan()
        for dispatch in dispatches:
            request = dispatch.request
            tokens = self._aligned(request.tokens)
            missing = self.tree.missing_tokens(tokens[: dispatch.committed_end], TierId.DEVICE)
            if missing:
                pages = self.store.allocate_pages(TierId.DEVICE, missing)
                self.tree.insert_committed(tokens[: dispatch.committed_end], TierId.DEVICE, pages)
            if dispatch.own_tokens:
                request.held_pages = self.store.allocate_pages(TierId.DEVICE, dispatch.own_tokens)
            if dispatch.committed_end:
                path = self.tree.match_prefix(tokens[: dispatch.committed_end]).node_path
                self.tree.adjust_refs(path, 1)
                request.pinned = path
            if self.tree.transient_tokens(request.tokens):
                self.tree.transition_transient(request.tokens, TransientEvent.DISPATCH)
            self._account_hits(request, dispatch)
            request.state = RequestState.PREFILLING
            executed.add(dispatch.member)

        index = self._batch_index
        self._batch_index += 1
        io_active = self._gpu_copy_active()
        t_load = host_load_seconds(executed, self.config)
        _, decode_slowdown = interference_factors(self.config.backend, io_active or t_load > 0)
        t_comp = prefill_compute_seconds(executed, self.config.compute)
        prefill_slowdown, _ = interference_factors(self.config.backend, io_active or t_load > 0)
        estimate = BatchEstimate(
            t_load=t_load,
            t_comp=t_comp * (1.0 + prefill_slowdown),
            decode_step=self._decode_step_seconds(decode_slowdown),
        )
        slot = self.scheduler.plan_bubble_fill(executed, self._decode_pool, estimate)
        load_factor = 1.0 + self.config.bubble_contention if slot else 1.0
        wall, stall = prefill_wall_time(executed, self.config, io_active, load_factor)
        if t_load > 0 and isinstance(self.config.backend, GpuAssistBackend):
            self._load_until = self.clock + t_load * load_factor

        self._running = _RunningBatch(index=index, dispatches=dispatches, start=self.clock, wall=wall)
        self._push(self.clock + wall, EventKind.PREFILL_DONE, index)

        record = plan.to_log_record(index, slot.steps if slot else 0)
        record["start"] = self.clock
        record["executed_compute_tokens"] = executed.compute_tokens
        record["deferral_counts"] = {rid: self._requests[rid].deferrals for rid in plan.deferred}
        self.log.scheduler_log.append(record)
        self.log.batches.append(
            BatchRecord(
                batch=index,
                start=self.clock,
                compute_tokens=executed.compute_tokens,
                host_load_tokens=executed.host_load_tokens,
                device_hit_tokens=executed.device_hit_tokens,
                ratio=executed.load_compute_ratio,
                wall=wall,
                stall=stall,
                bubble_steps=slot.steps if slot else 0,
                requests=" ".join(executed.requests),
                bundle_hits=executed.bundle_hits,
            )
        )
        logger.debug(
            "Batch %d: %d requests, compute=%d load=%d wall=%.6f stall=%.6f",
            index, len(executed), executed.compute_tokens, executed.host_load_tokens, wall, stall,
        )

        if slot:
            self._running.bubble_steps_left = slot.steps
            self._start_decode_step(bubble=True)
        if self._queue:
            self._prepared = self._form()

    def _account_hits(self, request: Request, dispatch: _Dispatch) -> None:
        member = dispatch.member
        context = request.context_len
        device = min(member.device_tokens, context)
        host = min(member.host_tokens - dispatch.staged, context - device)
        disk = min(dispatch.staged, context - device - host)
        request.device_hit_tokens = device
        request.host_hit_tokens = host
        request.disk_hit_tokens = disk
        request.recomputed_tokens = context - device - host - disk

    def _on_prefill_done(self) -> None:
        batch = self._running
        page = self.geometry.page_size_tokens
        for dispatch in batch.dispatches:
            request = dispatch.request
            transient = self.tree.transient_tokens(request.tokens)
            used = transient // page
            if transient:
                self.tree.transition_transient(request.tokens, TransientEvent.COMMIT, request.held_pages[:used])
            rest = request.held_pages[used:]
            request.held_pages = [p for p in rest if p.tokens_covered < page]
            self.store.release_pages([p for p in rest if p.tokens_covered == page])

            path = self.tree.match_prefix(request.tokens).node_path
            if request.pinned:
                self.tree.adjust_refs(request.pinned, -1)
            request.pinned = None
            if path:
                self.tree.adjust_refs(path, 1)
                request.pinned = path

            request.first_token_at = self.clock
            request.generated = 1
            self._schedule_backup(request.tokens)
            if request.generated >= request.output_len:
                self._finish(request)
            else:
                request.state = RequestState.DECODING
                self._decode_pool.append(request)
        self._running = None

    # ----------------------------------------------------------------- decode

    def _decode_step_seconds(self, slowdown: float) -> float:
        tokens = sum(request.prompt_len + request.generated for request in self._decode_pool)
        return decode_step_time(len(self._decode_pool), tokens, self.config.compute, slowdown)

    def _start_decode_step(self, bubble: bool) -> None:
        active = [request.id for request in self._decode_pool]
        if not active:
            return
        _, slowdown = interference_factors(self.config.backend, self._gpu_copy_active())
        duration = self._decode_step_seconds(slowdown)
        if bubble:
            self._running.bubble_steps_left -= 1
        self._decoding = True
        self._push(self.clock + duration, EventKind.DECODE_STEP_DONE, (active, bubble))

    def _on_decode_step_done(self, active: List[str], bubble: bool) -> None:
        self._decoding = False
        self.log.decode_steps += 1
        for request_id in active:
            request = self._requests[request_id]
            request.generated += 1
            if request.generated >= request.output_len:
                self._finish(request)
        running = self._running
        if not bubble or running is None or running.bubble_steps_left <= 0 or not self._decode_pool:
            return
        _, slowdown = interference_factors(self.config.backend, self._gpu_copy_active())
        if self.clock + self._decode_step_seconds(slowdown) <= running.end:
            self._start_decode_step(bubble=True)

    # ------------------------------------------------------ cache controller

    def _gpu_copy_active(self) -> bool:
        if not isinstance(self.config.backend, GpuAssistBackend):
            return False
        if self._load_until > self.clock:
            return True
        return any(
            isinstance(copy.job.backend, GpuAssistBackend) and copy.job.start <= self.clock < copy.job.end
            for copy in self._copies.values()
        )

    def _backend_for(self, source: TierId, dest: TierId) -> IoBackendSpec:
        if TierId.DISK in (source, dest):
            return self.config.disk_backend
        return self._backup_backend

    def _plan_copy(
        self, tokens: Tuple[int, ...], count: int, source: TierId, dest: TierId, pages: List[PageRef],
        start: float, cancellable: bool = False,
    ) -> Tuple[int, _Copy]:
        chunk = transfer_chunk_size(self.geometry, self.store.layout(source), self.store.layout(dest))
        job = plan_transfer(
            count * self.geometry.bytes_per_token,
            chunk,
            self._backend_for(source, dest),
            self.config.link(source, dest),
            start,
            cancellable=cancellable,
            source=source,
            dest=dest,
        )
        copy_id = next(self._copy_ids)
        copy = _Copy(job=job, tokens=tokens, count=count, pages=pages)
        self._copies[copy_id] = copy
        return copy_id, copy

    def _allocate(self, tier: TierId, token_count: int) -> Optional[List[PageRef]]:
        """Allocate pages for background work, evicting once; None if there is no room."""
        try:
            return self.store.allocate_pages(tier, token_count)
        except CapacityError as err:
            try:
                plan = self.tree.evict(tier, err.shortfall, self.clock)
            except PressureError:
                return None
            self._apply_eviction(plan)
        try:
            return self.store.allocate_pages(tier, token_count)
        except CapacityError:
            return None

    def _apply_eviction(self, plan: EvictionPlan) -> List[TransferJob]:
        self.store.release_pages(plan.released_pages)
        jobs = []
        for writeback in plan.writebacks:
            node = writeback.node
            tokens = node.path_tokens()
            pages = self._allocate(writeback.dest, writeback.token_count)
            if pages is None:
                logger.warning("No %s room for write-back of %d tokens; keeping them", writeback.dest.name, writeback.token_count)
                node.backup_pending = False
                continue
            copy_id, copy = self._plan_copy(tokens, writeback.token_count, writeback.source, writeback.dest, pages, self.clock)
            self._evicting.add(copy_id)
            self._push(copy.job.end, EventKind.TRANSFER_DONE, copy_id)
            jobs.append(copy.job)
        return jobs

    def _on_transfer_done(self, copy_id: int) -> None:
        copy = self._copies.pop(copy_id)
        self._evicting.discard(copy_id)
        self.tree.attach_copy(copy.tokens, copy.count, copy.job.dest, copy.pages)
        released = self.tree.drop_residency(copy.tokens, copy.count, copy.job.source)
        self.store.release_pages(released)

    def _schedule_backup(self, tokens: Sequence[int]) -> None:
        """Back up the device-only nodes on the path of tokens to host memory."""
        if not self.config.backup_enabled:
            return
        aligned = self._aligned(tokens)
        runs: List[Tuple[int, int]] = []
        offset = 0
        run_start: Optional[int] = None
        for node in self.tree.match_prefix(aligned).node_path:
            needs = (
                not node.is_transient
                and node.resident_at(TierId.DEVICE)
                and not node.resident_at(TierId.HOST)
                and not node.backup_pending
            )
            end = min(offset + node.token_count, len(aligned))
            if needs and run_start is None:
                run_start = offset
            if not needs and run_start is not None:
                runs.append((run_start, offset))
                run_start = None
            offset = end
        if run_start is not None:
            runs.append((run_start, offset))

        for start, end in runs:
            count = end - start
            pages = self._allocate(TierId.HOST, count)
            if pages is None:
                logger.warning("Host memory full: skipping backup of %d tokens", count)
                continue
            begin = max(self.clock, self._backup_free_at)
            copy_id, copy = self._plan_copy(aligned[:end], count, TierId.DEVICE, TierId.HOST, pages, begin)
            self._backup_free_at = copy.job.end
            self.tree.set_pending(aligned[:end], count, backup=True, value=True)
            self._push(copy.job.end, EventKind.BACKUP_DONE, copy_id)

    def _on_backup_done(self, copy_id: int) -> None:
        copy = self._copies.pop(copy_id)
        self.tree.attach_copy(copy.tokens, copy.count, TierId.HOST, copy.pages)

    def _start_prefetch(self, request: Request) -> None:
        match = self.tree.match_prefix(request.tokens)
        if match.disk_tokens == 0:
            return
        end = match.committed_tokens
        count = match.disk_tokens
        tokens = self._aligned(request.tokens)[:end]
        if any(node.prefetch_pending for node in self.tree.segment_nodes(tokens, count)):
            return
        pages = self._allocate(TierId.HOST, count)
        if pages is None:
            logger.warning("Host memory full: not prefetching %d tokens for %s", count, request.id)
            return
        copy_id, copy = self._plan_copy(tokens, count, TierId.DISK, TierId.HOST, pages, self.clock, cancellable=True)
        copy.request_id = request.id
        self.tree.set_pending(tokens, count, backup=False, value=True)
        self._prefetches[request.id] = copy_id
        self._push(copy.job.end, EventKind.PREFETCH_DONE, copy_id)

    def _on_prefetch_done(self, copy_id: int) -> None:
        copy = self._copies.pop(copy_id, None)
        if copy is None:
            return
        self.tree.attach_copy(copy.tokens, copy.count, TierId.HOST, copy.pages)
        request = self._requests[copy.request_id]
        request.staged_tokens += copy.count
        del self._prefetches[request.id]

    def _cancel_prefetch(self, request: Request) -> None:
        """Stop a running prefetch, keeping the pages it finished staging."""
        copy_id = self._prefetches.pop(request.id)
        copy = self._copies.pop(copy_id)
        credited = copy.job.credited_bytes(self.clock) // self.geometry.bytes_per_token
        staged = min(self.geometry.aligned(credited), copy.count)
        start = len(copy.tokens) - copy.count
        kept = staged // self.geometry.page_size_tokens
        if staged:
            self.tree.attach_copy(copy.tokens[: start + staged], staged, TierId.HOST, copy.pages[:kept])
        if staged < copy.count:
            self.tree.set_pending(copy.tokens, copy.count - staged, backup=False, value=False)
        self.store.release_pages(copy.pages[kept:])
        request.staged_tokens += staged
        logger.debug("Cancelled prefetch for %s: %d of %d tokens staged", request.id, staged, copy.count)
