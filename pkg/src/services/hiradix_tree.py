"""
Tiered radix-tree index over token sequences.

The tree records which memory tiers hold the KV pages of every cached prefix and
carries transient nodes for prefixes whose cache is queued or being computed.
Keys are compared page by page, so only whole pages are ever matched or cached.
"""

import heapq
import logging
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import InvariantViolationError, PressureError, TransientStateError
from ..core.hiradix_node import EvictionPlan, HiRadixNode, MatchResult, Writeback
from ..core.tier import KvGeometry, PageRef, TierId, TransientMark
from ..utils.file_utils import write_jsonl

logger = logging.getLogger(__name__)


class TransientEvent(str, Enum):
    DISPATCH = "dispatch"
    COMMIT = "commit"
    ABORT = "abort"


def common_prefix_len(a: Sequence[int], b: Sequence[int]) -> int:
    """Length of the longest common prefix of two token sequences."""
    n = min(len(a), len(b))
    if n == 0:
        return 0
    if tuple(a[:n]) == tuple(b[:n]):
        return n
    diff = np.asarray(a[:n], dtype=np.int64) != np.asarray(b[:n], dtype=np.int64)
    return int(np.argmax(diff))


class HiRadixTree:
    """
    Prefix index with per-tier residency and transient marks.

    Committed nodes hold pages on one or more tiers; a node resident on a tier
    always has its parent resident on that tier or a nearer one. Transient
    nodes hold no pages and always sit below committed ones.
    """

    def __init__(self, geometry: KvGeometry, tiers: Iterable[TierId] = (TierId.DEVICE, TierId.HOST)):
        self.page_size = geometry.page_size_tokens
        self.bytes_per_token = geometry.bytes_per_token
        self.tiers = sorted(set(tiers))
        self.root = HiRadixNode()
        self.clock = 0.0

    # ------------------------------------------------------------------ helpers

    def _align(self, tokens: Sequence[int]) -> Tuple[int, ...]:
        tokens = tuple(tokens)
        return tokens[: len(tokens) // self.page_size * self.page_size]

    def _key(self, tokens: Sequence[int], offset: int = 0):
        if self.page_size == 1:
            return tokens[offset]
        return tuple(tokens[offset : offset + self.page_size])

    def _match_len(self, edge: Tuple[int, ...], tokens: Tuple[int, ...], offset: int) -> int:
        matched = common_prefix_len(edge, tokens[offset : offset + len(edge)])
        return matched // self.page_size * self.page_size

    def _next_tier(self, tier: TierId) -> Optional[TierId]:
        farther = [t for t in self.tiers if t > tier]
        return farther[0] if farther else None

    def _split(self, node: HiRadixNode, at: int) -> HiRadixNode:
        """Split node after `at` tokens; returns the new upper node."""
        if at <= 0 or at >= node.token_count or at % self.page_size:
            raise InvariantViolationError(f"Illegal split of {node!r} at {at}")
        parent = node.parent
        upper = HiRadixNode(node.edge_tokens[:at], parent=parent, transient=node.transient, last_access=node.last_access)
        upper.ref_count = node.ref_count
        upper.backup_pending = node.backup_pending
        upper.prefetch_pending = node.prefetch_pending
        pages_up = at // self.page_size
        for tier, pages in node.pages.items():
            upper.pages[tier] = pages[:pages_up]
            node.pages[tier] = pages[pages_up:]
        parent.children[self._key(upper.edge_tokens)] = upper
        node.edge_tokens = node.edge_tokens[at:]
        node.parent = upper
        upper.children[self._key(node.edge_tokens)] = node
        return upper

    def _remove(self, node: HiRadixNode) -> None:
        if node.children:
            raise InvariantViolationError(f"Cannot remove {node!r} with children")
        del node.parent.children[self._key(node.edge_tokens)]
        node.parent = None

    def _walk(self, tokens: Tuple[int, ...], split_end: bool) -> Tuple[List[HiRadixNode], int]:
        """
        Follow tokens down the tree.

        Returns the nodes fully covered by tokens and the number of tokens they
        cover. With split_end, a node matched only partially is split so the
        upper part is covered too.
        """
        path: List[HiRadixNode] = []
        node = self.root
        offset = 0
        while offset < len(tokens):
            child = node.children.get(self._key(tokens, offset))
            if child is None:
                break
            matched = self._match_len(child.edge_tokens, tokens, offset)
            if matched == 0:
                break
            if matched < child.token_count:
                if not split_end:
                    break
                child = self._split(child, matched)
            path.append(child)
            offset += matched
            node = child
        return path, offset

    def _segment(self, tokens: Tuple[int, ...], start: int) -> List[HiRadixNode]:
        """Existing nodes covering exactly tokens[start:], splitting at both ends."""
        if start % self.page_size or len(tokens) % self.page_size:
            raise InvariantViolationError("Segment boundaries must be page-aligned")
        path, covered = self._walk(tokens, split_end=True)
        if covered != len(tokens):
            raise InvariantViolationError(f"Path of {len(tokens)} tokens is not in the tree")
        segment: List[HiRadixNode] = []
        offset = covered
        for node in reversed(path):
            if offset <= start:
                break
            node_start = offset - node.token_count
            if node_start < start:
                self._split(node, start - node_start)
            segment.append(node)
            offset = node_start
        segment.reverse()
        return segment

    def _assign(self, node: HiRadixNode, tier: TierId, pages: List[PageRef], cursor: int) -> int:
        count = node.token_count // self.page_size
        node.pages[tier] = pages[cursor : cursor + count]
        return cursor + count

    @staticmethod
    def _check_pages(pages: Sequence[PageRef], tier: TierId, expected_tokens: int) -> None:
        covered = sum(page.tokens_covered for page in pages)
        if covered != expected_tokens:
            raise InvariantViolationError(
                f"Pages cover {covered} tokens but {expected_tokens} must become resident on {tier.name}"
            )
        if any(page.tier != tier for page in pages):
            raise InvariantViolationError(f"Pages from another tier handed to {tier.name}")

    # ------------------------------------------------------------------ queries

    def match_prefix(self, tokens: Sequence[int], clock: Optional[float] = None) -> MatchResult:
        """
        Longest stored prefix of tokens with its per-tier breakdown.

        Committed nodes on the matched path have their last_access refreshed.
        The structure is not modified.
        """
        tokens = self._align(tokens)
        now = self.clock if clock is None else clock
        result = MatchResult()
        node = self.root
        offset = 0
        while offset < len(tokens):
            child = node.children.get(self._key(tokens, offset))
            if child is None:
                break
            matched = self._match_len(child.edge_tokens, tokens, offset)
            if matched == 0:
                break
            if child.is_transient:
                result.transient_tokens += matched
            else:
                tier = child.nearest_tier
                if tier is None:
                    break
                if tier == TierId.DEVICE:
                    result.device_tokens += matched
                elif tier == TierId.HOST:
                    result.host_tokens += matched
                else:
                    result.disk_tokens += matched
                child.last_access = now
            result.node_path.append(child)
            result.total_matched += matched
            offset += matched
            if matched < child.token_count:
                break
            node = child
        return result

    def missing_tokens(self, tokens: Sequence[int], tier: TierId) -> int:
        """Tokens insert_committed(tokens, tier, ...) would make newly resident."""
        tokens = self._align(tokens)
        missing = 0
        node = self.root
        offset = 0
        while offset < len(tokens):
            child = node.children.get(self._key(tokens, offset))
            if child is None:
                return missing + len(tokens) - offset
            matched = self._match_len(child.edge_tokens, tokens, offset)
            if child.is_transient:
                return missing
            if not child.resident_at(tier):
                missing += matched
            offset += matched
            if matched < child.token_count:
                return missing + len(tokens) - offset
            node = child
        return missing

    def transient_tokens(self, tokens: Sequence[int]) -> int:
        return self.match_prefix(tokens).transient_tokens

    def iter_nodes(self) -> Iterator[HiRadixNode]:
        """All non-root nodes, parents before children, children in key order."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            if not node.is_root:
                yield node
            stack.extend(node.children[key] for key in sorted(node.children, key=repr, reverse=True))

    def resident_tokens(self, tier: TierId) -> int:
        return sum(node.token_count for node in self.iter_nodes() if node.resident_at(tier))

    def resident_bytes(self, tier: TierId) -> int:
        return self.resident_tokens(tier) * self.bytes_per_token

    # ---------------------------------------------------------------- mutations

    def insert_committed(self, tokens: Sequence[int], tier: TierId, pages: Sequence[PageRef]) -> int:
        """
        Record that the page-aligned prefix of tokens is resident on tier.

        Args:
            tokens: Token sequence; a partial trailing page is ignored
            tier: Tier now holding the pages
            pages: Pages covering exactly the tokens not yet resident on tier

        Returns:
            Tokens newly made resident on tier

        Raises:
            InvariantViolationError: If pages do not cover the missing tokens
        """
        tokens = self._align(tokens)
        pages = list(pages)
        missing = self.missing_tokens(tokens, tier)
        self._check_pages(pages, tier, missing)
        if missing == 0:
            return 0

        cursor = 0
        node = self.root
        offset = 0
        while offset < len(tokens):
            child = node.children.get(self._key(tokens, offset))
            if child is None:
                leaf = HiRadixNode(tokens[offset:], parent=node, last_access=self.clock)
                node.children[self._key(leaf.edge_tokens)] = leaf
                cursor = self._assign(leaf, tier, pages, cursor)
                break
            matched = self._match_len(child.edge_tokens, tokens, offset)
            if child.is_transient:
                break
            if matched < child.token_count:
                child = self._split(child, matched)
            if not child.resident_at(tier):
                cursor = self._assign(child, tier, pages, cursor)
            child.last_access = self.clock
            offset += matched
            node = child
        return missing

    def mark_in_queue(self, tokens: Sequence[int]) -> int:
        """
        Mark the uncached suffix of tokens as queued computation.

        Returns:
            Tokens of the query that matched existing transient nodes
        """
        tokens = self._align(tokens)
        transient_match = 0
        node = self.root
        offset = 0
        while offset < len(tokens):
            child = node.children.get(self._key(tokens, offset))
            if child is None:
                break
            matched = self._match_len(child.edge_tokens, tokens, offset)
            if child.is_transient:
                transient_match += matched
            if matched < child.token_count:
                child = self._split(child, matched)
            node = child
            offset += matched
        if offset < len(tokens):
            mark = HiRadixNode(tokens[offset:], parent=node, transient=TransientMark.IN_QUEUE, last_access=self.clock)
            node.children[self._key(mark.edge_tokens)] = mark
        return transient_match

    def transition_transient(
        self,
        tokens: Sequence[int],
        event: TransientEvent,
        pages: Optional[Sequence[PageRef]] = None,
        keep: int = 0,
    ) -> None:
        """
        Advance the transient nodes on the path of tokens.

        Dispatch flips queued nodes to in-flight, Commit turns in-flight nodes
        into device-resident nodes backed by pages, Abort removes the marks
        past the first keep tokens, which other requests still own.

        Raises:
            TransientStateError: If a node is in the wrong state
            InvariantViolationError: If Commit pages do not cover the nodes
        """
        tokens = self._align(tokens)
        path, _ = self._walk(tokens, split_end=True)
        marked = [node for node in path if node.is_transient]

        if event == TransientEvent.DISPATCH:
            if not marked:
                raise TransientStateError(_describe(tokens), TransientMark.IN_QUEUE.value, None)
            for node in marked:
                node.transient = TransientMark.IN_FLIGHT
            return

        if event == TransientEvent.COMMIT:
            for node in marked:
                if node.transient != TransientMark.IN_FLIGHT:
                    raise TransientStateError(repr(node), TransientMark.IN_FLIGHT.value, node.transient.value)
            pages = list(pages or [])
            self._check_pages(pages, TierId.DEVICE, sum(node.token_count for node in marked))
            if not marked:
                return
            cursor = 0
            for node in marked:
                node.transient = None
                node.last_access = self.clock
                cursor = self._assign(node, TierId.DEVICE, pages, cursor)
            return

        if not marked:
            raise TransientStateError(_describe(tokens), "in_queue or in_flight", None)
        starts = {}
        offset = 0
        for node in path:
            starts[id(node)] = offset
            offset += node.token_count
        for node in reversed(marked):
            if node.children or starts[id(node)] < keep:
                break
            self._remove(node)

    def clear_in_queue(self) -> int:
        """Remove every queued mark; returns the number of nodes removed."""
        removed = 0
        for node in list(self.iter_nodes()):
            if node.parent is None or node.transient != TransientMark.IN_QUEUE:
                continue
            if node.parent.transient == TransientMark.IN_QUEUE:
                continue
            removed += self._drop_subtree(node)
        return removed

    def _drop_subtree(self, node: HiRadixNode) -> int:
        removed = 1
        for child in list(node.children.values()):
            if child.transient != TransientMark.IN_QUEUE:
                raise InvariantViolationError(f"{child!r} sits below queued mark {node!r}")
            removed += self._drop_subtree(child)
        self._remove(node)
        return removed

    def adjust_refs(self, node_path: Sequence[HiRadixNode], delta: int) -> None:
        """
        Pin (+1) or unpin (-1) a path, identified by its deepest node.

        The walk goes from the deepest node up to the root, so nodes created by
        later splits above it are adjusted too.

        Raises:
            InvariantViolationError: On underflow
        """
        if delta not in (1, -1):
            raise ValueError("delta must be +1 or -1")
        if not node_path:
            return
        chain = []
        node = node_path[-1]
        while node is not None and not node.is_root:
            chain.append(node)
            node = node.parent
        if delta < 0:
            for node in chain:
                if node.ref_count < 1:
                    raise InvariantViolationError(f"ref_count underflow on {node!r}")
        for node in chain:
            node.ref_count += delta

    def evict(self, tier: TierId, bytes_needed: int, clock: float) -> EvictionPlan:
        """
        Free at least bytes_needed on tier by evicting least recently used leaves.

        Victims whose next tier holds no copy yet are returned as write-backs
        and stay resident until the caller completes them; the rest are dropped
        right away and their pages returned for release.

        Raises:
            PressureError: If unpinned victims cannot cover bytes_needed (nothing
                is evicted in that case)
        """
        self.clock = clock
        plan = EvictionPlan()
        if bytes_needed <= 0:
            return plan
        next_tier = self._next_tier(tier)

        blocked: Dict[int, int] = {}
        heap: List[Tuple[float, int, HiRadixNode]] = []
        for node in self.iter_nodes():
            blocked[node.node_id] = self._blocking_children(node, tier, next_tier)
            if blocked[node.node_id] == 0 and self._evictable(node, tier):
                heapq.heappush(heap, (node.last_access, node.node_id, node))

        victims: List[Tuple[HiRadixNode, bool]] = []
        freed = 0
        while heap and freed < bytes_needed:
            _, _, node = heapq.heappop(heap)
            needs_copy = next_tier is not None and not node.resident_at(next_tier)
            victims.append((node, needs_copy))
            freed += node.token_count * self.bytes_per_token
            if needs_copy:
                continue
            parent = node.parent
            if parent is None or parent.is_root:
                continue
            blocked[parent.node_id] -= 1
            if blocked[parent.node_id] == 0 and self._evictable(parent, tier):
                heapq.heappush(heap, (parent.last_access, parent.node_id, parent))

        if freed < bytes_needed:
            raise PressureError(tier, bytes_needed - freed)

        for node, needs_copy in victims:
            plan.victim_tokens += node.token_count
            if needs_copy:
                node.backup_pending = True
                plan.writebacks.append(
                    Writeback(
                        node=node,
                        source=tier,
                        dest=next_tier,
                        token_count=node.token_count,
                        bytes_total=node.token_count * self.bytes_per_token,
                    )
                )
            else:
                plan.released_pages.extend(node.pages.pop(tier))
                if not node.pages:
                    self._remove(node)
        plan.freed_bytes = freed
        logger.debug(
            "Evict %s: need %d B, %d victims, %d write-backs",
            tier.name, bytes_needed, len(victims), len(plan.writebacks),
        )
        return plan

    def _evictable(self, node: HiRadixNode, tier: TierId) -> bool:
        return (
            not node.is_transient
            and node.nearest_tier == tier
            and node.ref_count == 0
            and not node.backup_pending
            and not node.prefetch_pending
        )

    @staticmethod
    def _blocking_children(node: HiRadixNode, tier: TierId, next_tier: Optional[TierId]) -> int:
        if next_tier is None:
            return len(node.children)
        return sum(
            1
            for child in node.children.values()
            if not child.is_transient and child.nearest_tier is not None and child.nearest_tier <= tier
        )

    # ------------------------------------------------------- background copies

    def segment_nodes(self, tokens: Sequence[int], count: int) -> List[HiRadixNode]:
        """Nodes covering the last count tokens of the page-aligned path tokens."""
        tokens = self._align(tokens)
        return self._segment(tokens, len(tokens) - count)

    def set_pending(self, tokens: Sequence[int], count: int, backup: bool, value: bool) -> None:
        for node in self.segment_nodes(tokens, count):
            if backup:
                node.backup_pending = value
            else:
                node.prefetch_pending = value

    def attach_copy(self, tokens: Sequence[int], count: int, tier: TierId, pages: Sequence[PageRef]) -> None:
        """
        Record a finished copy of the last count tokens of a path onto tier.

        Raises:
            InvariantViolationError: If a covered node is transient, already
                resident on tier, or pages do not cover the segment
        """
        pages = list(pages)
        self._check_pages(pages, tier, count)
        if count == 0:
            return
        cursor = 0
        for node in self.segment_nodes(tokens, count):
            if node.is_transient or node.resident_at(tier):
                raise InvariantViolationError(f"Copy onto {tier.name} of {node!r} is not legal")
            cursor = self._assign(node, tier, pages, cursor)
            node.backup_pending = False
            node.prefetch_pending = False

    def drop_residency(self, tokens: Sequence[int], count: int, tier: TierId) -> List[PageRef]:
        """
        Drop tier copies of the last count tokens of a path; returns freed pages.

        Pinned nodes keep their copy.
        """
        released: List[PageRef] = []
        for node in self.segment_nodes(tokens, count):
            if node.ref_count > 0:
                node.backup_pending = False
                continue
            released.extend(node.pages.pop(tier, []))
            node.backup_pending = False
            if not node.pages and not node.children:
                self._remove(node)
        return released

    # -------------------------------------------------------------------- debug

    def dump_jsonl(self, path: str) -> None:
        """Write one JSON object per node: path tokens, residency, mark, last access."""
        write_jsonl((self.describe_node(node) for node in self.iter_nodes()), path)

    @staticmethod
    def describe_node(node: HiRadixNode) -> dict:
        return {
            "path": list(node.path_tokens()),
            "residency": sorted(tier.name.lower() for tier in node.residency),
            "transient": node.transient.value if node.transient else None,
            "last_access": node.last_access,
            "ref_count": node.ref_count,
        }

    def snapshot(self) -> List[dict]:
        return [self.describe_node(node) for node in self.iter_nodes()]


def _describe(tokens: Tuple[int, ...]) -> str:
    head = ",".join(str(token) for token in tokens[:4])
    return f"path[{head}{',...' if len(tokens) > 4 else ''}]"
