"""
Cache-aware prefill scheduling.

This module provides the Scheduler, which defers requests that would hit
computation still in progress, forms prefill batches that balance host loading
against compute, and plans decode steps that fill loading stalls.
"""

import logging
import math
from typing import Dict, List, Optional, Tuple

from ..core.batch import BatchEstimate, BatchPlan, DecodeSlot, MemberPlan
from ..core.hiradix_node import MatchResult
from ..core.request import Request, RequestState
from ..core.sim_config import SchedulerConfig
from .hiradix_tree import HiRadixTree, common_prefix_len

logger = logging.getLogger(__name__)

DEFERRAL_WARN_LIMIT = 10


class Scheduler:
    """
    Forms prefill batches from the waiting queue.

    Tier breakdowns are looked up once per scheduling round; call schedule()
    (or reset_round()) whenever the tree has changed.
    """

    def __init__(self, tree: HiRadixTree, config: SchedulerConfig):
        self.tree = tree
        self.config = config
        self._matches: Dict[str, MatchResult] = {}
        self._requests: Dict[str, Request] = {}

    def reset_round(self) -> None:
        self._matches.clear()

    def breakdown(self, request: Request) -> MatchResult:
        match = self._matches.get(request.id)
        if match is None:
            match = self.tree.match_prefix(request.tokens)
            self._matches[request.id] = match
        return match

    def schedule(self, queue: List[Request]) -> Tuple[Optional[BatchPlan], List[Request]]:
        """
        Run one scheduling round over the waiting queue.

        Args:
            queue: Waiting requests, deferred ones from the last round first

        Returns:
            The batch (None when every request was deferred) and the new
            waiting queue: deferred requests, then the rest in order
        """
        self.tree.clear_in_queue()
        self.reset_round()
        eligible, deferred = self.defer_delay_hits(queue)
        plan = None
        if eligible:
            plan = self.form_batch(eligible)
            plan.deferred = [request.id for request in deferred]
        return plan, deferred + eligible

    def defer_delay_hits(self, queue: List[Request]) -> Tuple[List[Request], List[Request]]:
        """Split the queue into eligible requests and delay hits to retry next round."""
        eligible: List[Request] = []
        deferred: List[Request] = []
        for request in queue:
            overlap = self.tree.mark_in_queue(request.tokens)
            if self.config.deferral_enabled and overlap > self.config.deferral_threshold:
                request.state = RequestState.DEFERRED
                request.deferrals += 1
                if request.deferrals == DEFERRAL_WARN_LIMIT:
                    logger.warning("Request %s deferred %d times", request.id, request.deferrals)
                deferred.append(request)
            else:
                request.state = RequestState.QUEUED
                eligible.append(request)
        if deferred:
            logger.debug("Deferred %d delay hits: %s", len(deferred), [request.id for request in deferred])
        return eligible, deferred

    def plan_member(self, batch: BatchPlan, request: Request) -> MemberPlan:
        """Accounting of request if it joined batch now."""
        self._requests[request.id] = request
        match = self.breakdown(request)
        limit = request.prompt_len - 1
        device = min(match.device_tokens, limit)
        member = MemberPlan(
            request_id=request.id,
            device_tokens=device,
            host_tokens=min(match.host_tokens, limit - device),
            disk_tokens=match.disk_tokens,
            transient_tokens=match.transient_tokens,
        )
        cached = member.cached_tokens
        bundle_of, prefix = self._best_overlap(batch, request, match)
        if bundle_of is not None and prefix - match.committed_tokens > self.config.deferral_threshold:
            member.bundle_of = bundle_of
            member.bundle_prefix = prefix
            if self.config.dedup_enabled:
                member.shared_tokens = prefix - cached
        member.compute_tokens = request.prompt_len - cached - member.shared_tokens
        return member

    def _best_overlap(self, batch: BatchPlan, request: Request, match: MatchResult) -> Tuple[Optional[str], int]:
        best_id: Optional[str] = None
        best_prefix = 0
        committed = match.committed_tokens
        for member_id in batch.requests:
            other = self._requests[member_id]
            prefix = common_prefix_len(request.tokens, other.tokens)
            prefix = prefix // self.tree.page_size * self.tree.page_size
            if prefix > committed and prefix > best_prefix:
                best_id, best_prefix = member_id, prefix
        return best_id, best_prefix

    def loading_bound(self, batch: BatchPlan, candidate: Request) -> bool:
        member = self.plan_member(batch, candidate)
        load = batch.host_load_tokens + member.host_tokens
        compute = batch.compute_tokens + member.compute_tokens
        return load / max(compute, 1) > self.config.loading_bound_ratio

    def is_bundle_hit(self, batch: BatchPlan, candidate: Request) -> bool:
        return self.plan_member(batch, candidate).bundle_of is not None

    def _fits(self, batch: BatchPlan, member: MemberPlan) -> bool:
        return len(batch) == 0 or batch.compute_tokens + member.compute_tokens <= self.config.max_batch_tokens

    def _is_full(self, batch: BatchPlan) -> bool:
        return batch.compute_tokens >= self.config.max_batch_tokens

    def _add(self, batch: BatchPlan, request: Request, member: Optional[MemberPlan] = None) -> None:
        batch.add(member or self.plan_member(batch, request))
        request.state = RequestState.SCHEDULED

    def _add_bundle_hits(self, batch: BatchPlan, queue: List[Request]) -> None:
        kept = []
        for request in queue:
            member = self.plan_member(batch, request)
            if member.bundle_of is not None and self._fits(batch, member):
                self._add(batch, request, member)
            else:
                kept.append(request)
        queue[:] = kept

    def form_batch(self, queue: List[Request]) -> BatchPlan:
        """
        Form one prefill batch.

        The queue is consumed in place: on return it holds the requests left
        for later batches, in their original order.

        Args:
            queue: Eligible requests in FIFO order (non-empty)

        Returns:
            The batch plan
        """
        if not queue:
            raise ValueError("form_batch needs a non-empty queue")
        batch = BatchPlan()

        if not self.config.balanced_batching_enabled:
            while queue:
                member = self.plan_member(batch, queue[0])
                if not self._fits(batch, member):
                    break
                self._add(batch, queue.pop(0), member)
            return batch

        position = {request.id: index for index, request in enumerate(queue)}
        self._add(batch, queue.pop(0))
        self._add_bundle_hits(batch, queue)

        deprioritized: List[Request] = []
        leftovers: List[Request] = []
        while queue and not self._is_full(batch):
            candidate = queue.pop(0)
            if self.loading_bound(batch, candidate):
                deprioritized.append(candidate)
                continue
            member = self.plan_member(batch, candidate)
            if not self._fits(batch, member):
                leftovers.append(candidate)
                continue
            self._add(batch, candidate, member)
            self._add_bundle_hits(batch, queue)

        for request in deprioritized:
            member = self.plan_member(batch, request)
            if self._is_full(batch) or not self._fits(batch, member):
                leftovers.append(request)
                continue
            self._add(batch, request, member)

        queue[:] = sorted(leftovers, key=lambda request: position[request.id]) + queue
        logger.debug(
            "Formed batch of %d: compute=%d load=%d ratio=%.2f deprioritized=%d",
            len(batch), batch.compute_tokens, batch.host_load_tokens, batch.load_compute_ratio, len(deprioritized),
        )
        return batch

    def plan_bubble_fill(
        self, batch: BatchPlan, decode_pool: List[Request], estimate: BatchEstimate
    ) -> Optional[DecodeSlot]:
        """Decode steps that fit into the loading stall of batch, if any."""
        if not self.config.bubble_fill_enabled or not decode_pool or len(batch) == 0:
            return None
        if estimate.t_load <= estimate.t_comp or estimate.decode_step <= 0:
            return None
        steps = math.floor((estimate.t_load - estimate.t_comp) / estimate.decode_step + 1e-9)
        if steps < 1:
            return None
        return DecodeSlot(steps=steps)
