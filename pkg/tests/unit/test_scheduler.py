"""
Unit tests for the Scheduler class.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from src.core.batch import BatchEstimate, BatchPlan
from src.core.request import RequestState
from src.core.sim_config import SchedulerConfig
from src.core.tier import TierId
from src.services.hiradix_tree import HiRadixTree
from src.services.scheduler import Scheduler
from tests.builders import SegmentTokens, cache, make_request, put_in_flight, roomy_store, unit_geometry

GOLDEN_DIR = Path(__file__).parent.parent / "fixtures" / "golden"
GOLDEN_CASES = sorted(GOLDEN_DIR.glob("*.json"))


def load_case(path: Path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


class TestGoldenBatches:
    """Batch formation replayed against hand-worked scenarios."""

    def test_fixture_count(self):
        """Test that the golden set is present."""
        assert len(GOLDEN_CASES) >= 10

    @pytest.mark.parametrize("path", GOLDEN_CASES, ids=[path.stem for path in GOLDEN_CASES])
    def test_golden(self, path):
        """Test one golden scenario end to end through schedule()."""
        case = load_case(path)
        geometry = unit_geometry()
        tree = HiRadixTree(geometry, tiers=(TierId.DEVICE, TierId.HOST, TierId.DISK))
        store = roomy_store(geometry)
        symbols = SegmentTokens()
        for entry in case["cached"]:
            cache(tree, store, symbols.tokens(entry["segments"]), TierId.parse(entry["tier"]))
        for entry in case["in_flight"]:
            put_in_flight(tree, symbols.tokens(entry["segments"]))
        queue = [
            make_request(item["id"], symbols.tokens(item["segments"]), order=order)
            for order, item in enumerate(case["queue"])
        ]

        scheduler = Scheduler(tree, SchedulerConfig(**case["scheduler"]))
        plan, waiting = scheduler.schedule(queue)

        expected = case["expected"]
        assert plan is not None
        assert plan.requests == expected["batch"]
        assert plan.bundle_groups == expected["bundle_groups"]
        assert plan.deferred == expected["deferred"]
        assert [request.id for request in waiting] == expected["queue_after"]
        assert plan.compute_tokens == expected["compute_tokens"]
        assert plan.host_load_tokens == expected["host_load_tokens"]


class TestScheduler:
    """Test cases for the Scheduler class."""

    def setup_method(self):
        """Set up test fixtures."""
        self.geometry = unit_geometry()
        self.tree = HiRadixTree(self.geometry)
        self.store = roomy_store(self.geometry, tiers=(TierId.DEVICE, TierId.HOST))
        self.symbols = SegmentTokens()
        self.scheduler = Scheduler(self.tree, SchedulerConfig())

    def request(self, request_id, segments, order=0):
        return make_request(request_id, self.symbols.tokens(segments), order=order)

    def test_loading_bound_on_empty_batch(self):
        """Test that 50,000 host tokens against 400 new ones is loading-bound."""
        cache(self.tree, self.store, self.symbols.tokens([("H", 50000)]), TierId.HOST)
        candidate = self.request("c", [("H", 50000), ("q", 400)])

        assert self.scheduler.loading_bound(BatchPlan(), candidate)

    def test_loading_bound_ratio_exactly_at_limit(self):
        """Test that a ratio equal to the limit is not loading-bound."""
        cache(self.tree, self.store, self.symbols.tokens([("H", 40000)]), TierId.HOST)
        candidate = self.request("c", [("H", 40000), ("q", 400)])

        assert not self.scheduler.loading_bound(BatchPlan(), candidate)

    def test_overlap_under_threshold_not_deferred(self):
        """Test that an 80-token transient overlap does not defer."""
        first = self.request("a", [("X", 80), ("a", 300)])
        second = self.request("b", [("X", 80), ("b", 300)], order=1)

        eligible, deferred = self.scheduler.defer_delay_hits([first, second])

        assert [request.id for request in eligible] == ["a", "b"]
        assert deferred == []

    def test_deferral_counts_and_state(self):
        """Test that deferred requests are counted and marked."""
        first = self.request("a", [("X", 500), ("a", 10)])
        second = self.request("b", [("X", 500), ("b", 10)], order=1)

        eligible, deferred = self.scheduler.defer_delay_hits([first, second])

        assert [request.id for request in deferred] == ["b"]
        assert second.deferrals == 1
        assert second.state == RequestState.DEFERRED
        assert first.state == RequestState.QUEUED

    def test_deferral_disabled(self):
        """Test that disabling deferral keeps every request eligible."""
        scheduler = Scheduler(self.tree, SchedulerConfig(deferral_enabled=False))
        first = self.request("a", [("X", 500), ("a", 10)])
        second = self.request("b", [("X", 500), ("b", 10)], order=1)

        eligible, deferred = scheduler.defer_delay_hits([first, second])

        assert len(eligible) == 2
        assert deferred == []

    def test_schedule_all_deferred(self):
        """Test that a round deferring everything produces no batch."""
        put_in_flight(self.tree, self.symbols.tokens([("X", 1000)]))
        only = self.request("a", [("X", 1000), ("a", 10)])

        plan, waiting = self.scheduler.schedule([only])

        assert plan is None
        assert [request.id for request in waiting] == ["a"]

    def test_schedule_clears_queue_marks_between_rounds(self):
        """Test that queued marks from the last round do not defer anything."""
        first = self.request("a", [("X", 500), ("a", 10)])
        second = self.request("b", [("X", 500), ("b", 10)], order=1)
        self.scheduler.schedule([first, second])

        plan, waiting = self.scheduler.schedule([second])

        assert plan.requests == ["b"]
        assert waiting == []

    def test_device_hits_capped_below_prompt(self):
        """Test that a fully cached prompt still computes its last token."""
        tokens = self.symbols.tokens([("W", 64)])
        cache(self.tree, self.store, tokens, TierId.DEVICE)
        request = make_request("w", tokens)

        member = self.scheduler.plan_member(BatchPlan(), request)

        assert member.device_tokens == 63
        assert member.compute_tokens == 1

    def test_form_batch_empty_queue(self):
        """Test that forming a batch from nothing is rejected."""
        with pytest.raises(ValueError, match="non-empty queue"):
            self.scheduler.form_batch([])

    def test_is_bundle_hit(self):
        """Test bundle-hit detection against a batch member."""
        scheduler = Scheduler(self.tree, SchedulerConfig(deferral_enabled=False))
        first = self.request("a", [("X", 1000), ("a", 10)])
        second = self.request("b", [("X", 1000), ("b", 10)], order=1)
        batch = BatchPlan()
        batch.add(scheduler.plan_member(batch, first))

        assert scheduler.is_bundle_hit(batch, second)
        assert batch.members["a"].bundle_of is None


class TestBubbleFill:
    """Test cases for decode bubble planning."""

    def setup_method(self):
        """Set up test fixtures."""
        geometry = unit_geometry()
        self.scheduler = Scheduler(HiRadixTree(geometry), SchedulerConfig())
        self.batch = BatchPlan(requests=["p"])
        self.pool = [make_request("d", (1, 2, 3))]

    def test_steps_fill_stall(self):
        """Test that a 15 ms stall holds five 3 ms decode steps."""
        slot = self.scheduler.plan_bubble_fill(self.batch, self.pool, BatchEstimate(0.020, 0.005, 0.003))

        assert slot is not None
        assert slot.steps == 5

    def test_no_stall(self):
        """Test that compute-bound batches get no bubble steps."""
        assert self.scheduler.plan_bubble_fill(self.batch, self.pool, BatchEstimate(0.005, 0.005, 0.003)) is None

    def test_stall_shorter_than_step(self):
        """Test that a stall shorter than one step is left idle."""
        assert self.scheduler.plan_bubble_fill(self.batch, self.pool, BatchEstimate(0.007, 0.005, 0.003)) is None

    def test_empty_decode_pool(self):
        """Test that nothing is planned without decoding requests."""
        assert self.scheduler.plan_bubble_fill(self.batch, [], BatchEstimate(0.020, 0.005, 0.003)) is None

    def test_disabled(self):
        """Test that bubble filling can be switched off."""
        scheduler = Scheduler(self.scheduler.tree, SchedulerConfig(bubble_fill_enabled=False))

        assert scheduler.plan_bubble_fill(self.batch, self.pool, BatchEstimate(0.020, 0.005, 0.003)) is None


class TestStarvation:
    """Long random arrival sequences through repeated scheduling rounds."""

    MAX_WAIT = 200

    def arrival(self, rng, symbols, index):
        kind = int(rng.integers(0, 3))
        if kind == 0:
            segments = [(f"H{rng.integers(0, 3)}", 2000), (f"q{index}", int(rng.integers(10, 60)))]
        elif kind == 1:
            segments = [(f"S{rng.integers(0, 4)}", int(rng.integers(50, 400))), (f"s{index}", int(rng.integers(1, 40)))]
        else:
            segments = [(f"u{index}", int(rng.integers(300, 1500)))]
        return make_request(f"r{index}", symbols.tokens(segments), order=index)

    @pytest.mark.parametrize("seed", range(2))
    def test_every_request_batched(self, seed):
        """Test that no request waits unboundedly over 10,000 rounds and the queue drains."""
        rng = np.random.default_rng(seed)
        geometry = unit_geometry()
        tree = HiRadixTree(geometry)
        store = roomy_store(geometry, tiers=(TierId.DEVICE, TierId.HOST))
        symbols = SegmentTokens()
        for index in range(3):
            cache(tree, store, symbols.tokens([(f"H{index}", 2000)]), TierId.HOST)
        scheduler = Scheduler(tree, SchedulerConfig(max_batch_tokens=1024))
        queue = []
        since = {}
        batched = set()

        def round_(step):
            plan, waiting = scheduler.schedule(queue)
            if plan is not None:
                for request_id in plan.requests:
                    assert step - since[request_id] <= self.MAX_WAIT
                    batched.add(request_id)
            queue[:] = [request for request in waiting if request.id not in batched]

        for step in range(10_000):
            for _ in range(int(rng.poisson(0.7))):
                request = self.arrival(rng, symbols, len(since))
                since[request.id] = step
                queue.append(request)
            if queue:
                round_(step)
            for request in queue:
                assert step - since[request.id] <= self.MAX_WAIT

        step = 10_000
        while queue and step < 10_000 + self.MAX_WAIT:
            round_(step)
            step += 1

        assert queue == []
        assert batched == set(since)
