"""Circular-bin priority cache.

The priority range ``[low, high]`` is cut into ``N+1`` equal intervals.
Interval 0 means "lowest": a miss that lands there on a full cache is
bypassed. Interval ``k >= 1`` places the block in bin
``(first + k - 1) % N`` where ``first`` is the eviction cursor, read at
the start of the access. Eviction pops the head of the first non-empty bin
at or after the cursor. The cursor moves only when a removal empties its
bin; admissions never move it, so right after filling from empty it can
rest on an empty bin until the first eviction walks it forward.

Each bin is an ``OrderedDict`` used as an insertion-ordered set: O(1)
append, head pop and keyed removal. A plain dict would not do, since
iterating to its head after many front deletions walks the dead slots.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import NamedTuple


@dataclass(frozen=True)
class CacheConfig:
    capacity_blocks: int
    num_bins: int = 10
    priority_low: float = -1.0
    priority_high: float = 1.0

    def __post_init__(self):
        if self.capacity_blocks < 1:
            raise ValueError("capacity_blocks must be >= 1")
        if self.num_bins < 1:
            raise ValueError("num_bins must be >= 1")
        if not self.priority_low < self.priority_high:
            raise ValueError("priority_low must be < priority_high")

    @property
    def interval_width(self) -> float:
        return (self.priority_high - self.priority_low) / (self.num_bins + 1)


class AccessOutcome(NamedTuple):
    hit: bool
    bypassed: bool = False
    evicted: int | None = None


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    bypasses: int = 0
    admissions: int = 0
    evictions: int = 0


def priority_to_interval(p: float, cfg: CacheConfig) -> int:
    """Left-closed interval index of ``p``, clamped to ``0..N``."""
    k = math.floor((p - cfg.priority_low) / cfg.interval_width)
    if k < 0:
        return 0
    if k > cfg.num_bins:
        return cfg.num_bins
    return k


class BinCache:
    def __init__(self, cfg: CacheConfig):
        self.cfg = cfg
        self.bins: list[OrderedDict[int, None]] = [OrderedDict() for _ in range(cfg.num_bins)]
        self.first_bin = 0
        self.membership: dict[int, int] = {}
        self.stats = CacheStats()
        # hoisted for the hot path
        self._low = cfg.priority_low
        self._width = cfg.interval_width
        self._n = cfg.num_bins
        self._cap = cfg.capacity_blocks

    def __len__(self) -> int:
        return len(self.membership)

    @property
    def occupancy(self) -> int:
        return len(self.membership)

    def __contains__(self, block_id: int) -> bool:
        return block_id in self.membership

    def contains(self, block_id: int) -> bool:
        return block_id in self.membership

    def interval(self, p: float) -> int:
        k = math.floor((p - self._low) / self._width)
        return 0 if k < 0 else (self._n if k > self._n else k)

    def _advance_cursor(self) -> None:
        if not self.membership:
            return
        bins, n, i = self.bins, self._n, self.first_bin
        while not bins[i]:
            i = (i + 1) % n
        self.first_bin = i

    def access(self, block_id: int, priority: float) -> AccessOutcome:
        k = self.interval(priority)
        first = self.first_bin
        target = first if k == 0 else (first + k - 1) % self._n
        stats = self.stats
        where = self.membership.get(block_id)
        if where is not None:
            del self.bins[where][block_id]
            self.bins[target][block_id] = None
            self.membership[block_id] = target
            stats.hits += 1
            if where == first and not self.bins[first]:
                self._advance_cursor()
            return AccessOutcome(True)

        stats.misses += 1
        full = len(self.membership) >= self._cap
        if k == 0 and full:
            stats.bypasses += 1
            return AccessOutcome(False, True)
        evicted = self.evict_one() if full else None
        self.bins[target][block_id] = None
        self.membership[block_id] = target
        stats.admissions += 1
        return AccessOutcome(False, False, evicted)

    def evict_one(self) -> int:
        if not self.membership:
            raise IndexError("evict_one on an empty cache")
        if not self.bins[self.first_bin]:
            self._advance_cursor()
        head = self.bins[self.first_bin]
        victim, _ = head.popitem(last=False)
        del self.membership[victim]
        self.stats.evictions += 1
        if not head:
            self._advance_cursor()
        return victim

    def snapshot(self) -> list[tuple[int, int, int]]:
        """``(bin_index, entrance_rank, block_id)`` for every resident block."""
        return [(i, rank, b) for i, bin_ in enumerate(self.bins)
                for rank, b in enumerate(bin_)]

    def dump_snapshot(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for row in self.snapshot():
                fh.write("%d,%d,%d\n" % row)

    def eviction_order(self) -> list[int]:
        """Resident blocks in the order repeated ``evict_one`` would drop them."""
        n = self._n
        order: list[int] = []
        for j in range(n):
            order.extend(self.bins[(self.first_bin + j) % n])
        return order

    def audit(self) -> None:
        """Raise ``AssertionError`` if bins and membership disagree."""
        seen: dict[int, int] = {}
        for i, bin_ in enumerate(self.bins):
            for b in bin_:
                assert b not in seen, f"block {b} in bins {seen[b]} and {i}"
                seen[b] = i
        assert seen == self.membership, "membership map out of sync with bins"
        assert len(seen) <= self._cap, "occupancy exceeds capacity"
        s = self.stats
        assert s.misses == s.admissions + s.bypasses
        assert s.admissions - s.evictions == len(seen)
