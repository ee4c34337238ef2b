"""Reference replacement policies: LRU, LFU, Belady's OPT and LeCaR.

All policies expose ``name``, ``capacity`` and ``request(block_id) ->
AccessOutcome``. None of them bypass, so ``outcome.bypassed`` is always
false here.
"""
from __future__ import annotations

import heapq
import math
from collections import OrderedDict
from typing import Protocol, Sequence

import numpy as np

from .bincache import AccessOutcome

NEVER = math.inf

_HIT = AccessOutcome(True)
_MISS = AccessOutcome(False)


class Policy(Protocol):
    name: str
    capacity: int

    def request(self, block_id: int) -> AccessOutcome: ...


def _check_capacity(capacity: int) -> None:
    if capacity < 1:
        raise ValueError("capacity must be >= 1 block")


class LRU:
    name = "lru"

    def __init__(self, capacity: int):
        _check_capacity(capacity)
        self.capacity = capacity
        self.cache: OrderedDict[int, None] = OrderedDict()

    def __contains__(self, block_id):
        return block_id in self.cache

    def request(self, block_id: int) -> AccessOutcome:
        cache = self.cache
        if block_id in cache:
            cache.move_to_end(block_id)
            return _HIT
        evicted = None
        if len(cache) >= self.capacity:
            evicted, _ = cache.popitem(last=False)
        cache[block_id] = None
        return AccessOutcome(False, False, evicted)


class _FreqBuckets:
    """O(1) least-frequently-used bookkeeping. Within a frequency, blocks
    are kept in order of their last access, so ties go to the least recent."""

    def __init__(self):
        self.freq: dict[int, int] = {}
        self.buckets: dict[int, OrderedDict[int, None]] = {}
        self.min_freq = 0

    def __len__(self):
        return len(self.freq)

    def __contains__(self, block_id):
        return block_id in self.freq

    def add(self, block_id: int, freq: int = 1) -> None:
        self.freq[block_id] = freq
        self.buckets.setdefault(freq, OrderedDict())[block_id] = None
        if len(self.freq) == 1 or freq < self.min_freq:
            self.min_freq = freq

    def touch(self, block_id: int) -> None:
        f = self.freq[block_id]
        bucket = self.buckets[f]
        del bucket[block_id]
        if not bucket:
            del self.buckets[f]
            if self.min_freq == f:
                self.min_freq = f + 1
        self.freq[block_id] = f + 1
        self.buckets.setdefault(f + 1, OrderedDict())[block_id] = None

    def remove(self, block_id: int) -> int:
        f = self.freq.pop(block_id)
        bucket = self.buckets[f]
        del bucket[block_id]
        if not bucket:
            del self.buckets[f]
            if self.min_freq == f and self.freq:
                self.min_freq = min(self.buckets)
        return f

    def victim(self) -> int:
        return next(iter(self.buckets[self.min_freq]))


class LFU:
    """In-cache LFU: a block's count starts over each time it is admitted."""
    name = "lfu"

    def __init__(self, capacity: int):
        _check_capacity(capacity)
        self.capacity = capacity
        self.fb = _FreqBuckets()

    def __contains__(self, block_id):
        return block_id in self.fb

    def request(self, block_id: int) -> AccessOutcome:
        fb = self.fb
        if block_id in fb:
            fb.touch(block_id)
            return _HIT
        evicted = None
        if len(fb) >= self.capacity:
            evicted = fb.victim()
            fb.remove(evicted)
        fb.add(block_id)
        return AccessOutcome(False, False, evicted)


def next_use_table(blocks: Sequence[int]) -> list[float]:
    """``out[t]`` is the next index after ``t`` touching ``blocks[t]``, or
    ``NEVER``."""
    out: list[float] = [NEVER] * len(blocks)
    seen: dict[int, int] = {}
    for t in range(len(blocks) - 1, -1, -1):
        b = blocks[t]
        out[t] = seen.get(b, NEVER)
        seen[b] = t
    return out


class OPT:
    """Belady's MIN. Needs the whole trace up front.

    On a full-cache miss it evicts the resident block whose next use is
    furthest away; never-reused blocks go first, larger block id first
    among equals.
    """
    name = "opt"

    def __init__(self, capacity: int, blocks: Sequence[int]):
        _check_capacity(capacity)
        self.capacity = capacity
        self.blocks = list(blocks)
        self.next_use = next_use_table(self.blocks)
        self.resident: dict[int, float] = {}
        self._heap: list[tuple[float, int]] = []  # (-next_use, -block_id)
        self.t = 0

    def __contains__(self, block_id):
        return block_id in self.resident

    def request(self, block_id: int, t: int | None = None) -> AccessOutcome:
        if t is None:
            t = self.t
        elif t != self.t:
            raise ValueError(f"OPT expects access {self.t}, got {t}")
        if t >= len(self.blocks) or self.blocks[t] != block_id:
            raise ValueError(f"access {t} does not match the prepared trace")
        self.t = t + 1
        nu = self.next_use[t]
        resident = self.resident
        if block_id in resident:
            resident[block_id] = nu
            heapq.heappush(self._heap, (-nu, -block_id))
            return _HIT
        evicted = None
        if len(resident) >= self.capacity:
            heap = self._heap
            while True:
                neg_nu, neg_b = heapq.heappop(heap)
                b = -neg_b
                if resident.get(b) == -neg_nu:
                    break
            del resident[b]
            evicted = b
        resident[block_id] = nu
        heapq.heappush(self._heap, (-nu, -block_id))
        # stale entries are skipped lazily; rebuild if they pile up
        if len(self._heap) > 4 * len(resident) + 64:
            self._heap = [(-v, -k) for k, v in resident.items()]
            heapq.heapify(self._heap)
        return AccessOutcome(False, False, evicted)


def lecar_discount(capacity: int) -> float:
    return 0.002 ** (1.0 / capacity ** 0.25)


class LeCaR:
    """Regret-weighted mix of LRU and LFU experts.

    Evicted blocks are remembered in per-expert ghost histories (each as
    large as the cache). When a ghost returns, the expert that evicted it
    is penalized by boosting the other one by ``exp(lr * d**age)`` where
    ``age`` is the time since eviction. Weights are clamped to
    [0.01, 0.99] like the reference implementation so neither expert is
    ever starved out.
    """
    name = "lecar"

    def __init__(self, capacity: int, learning_rate: float = 0.45,
                 discount: float | None = None, seed: int = 0):
        _check_capacity(capacity)
        self.capacity = capacity
        self.learning_rate = learning_rate
        self.discount = lecar_discount(capacity) if discount is None else discount
        self.rng = np.random.default_rng(seed)
        self.w_lru = 0.5
        self.w_lfu = 0.5
        self.recency: OrderedDict[int, None] = OrderedDict()
        self.fb = _FreqBuckets()
        # ghost: block -> (eviction time, frequency at eviction)
        self.hist_lru: OrderedDict[int, tuple[int, int]] = OrderedDict()
        self.hist_lfu: OrderedDict[int, tuple[int, int]] = OrderedDict()
        self.time = 0

    @property
    def weights(self) -> tuple[float, float]:
        return self.w_lru, self.w_lfu

    def __contains__(self, block_id):
        return block_id in self.recency

    def _remember(self, hist: OrderedDict, block_id: int, freq: int) -> None:
        if len(hist) >= self.capacity:
            hist.popitem(last=False)
        hist[block_id] = (self.time, freq)

    def _regret(self, boost_lfu: bool, evicted_at: int) -> None:
        r = math.exp(self.learning_rate * self.discount ** (self.time - evicted_at))
        if boost_lfu:
            self.w_lfu *= r
        else:
            self.w_lru *= r
        total = self.w_lru + self.w_lfu
        self.w_lru /= total
        self.w_lfu = 1.0 - self.w_lru
        if self.w_lru > 0.99:
            self.w_lru, self.w_lfu = 0.99, 0.01
        elif self.w_lru < 0.01:
            self.w_lru, self.w_lfu = 0.01, 0.99

    def request(self, block_id: int) -> AccessOutcome:
        self.time += 1
        if block_id in self.recency:
            self.recency.move_to_end(block_id)
            self.fb.touch(block_id)
            return _HIT

        freq = 1
        ghost = self.hist_lru.pop(block_id, None)
        if ghost is not None:
            self._regret(boost_lfu=True, evicted_at=ghost[0])
            freq = ghost[1] + 1
        else:
            ghost = self.hist_lfu.pop(block_id, None)
            if ghost is not None:
                self._regret(boost_lfu=False, evicted_at=ghost[0])
                freq = ghost[1] + 1

        evicted = None
        if len(self.recency) >= self.capacity:
            use_lru = self.rng.random() < self.w_lru
            if use_lru:
                evicted = next(iter(self.recency))
            else:
                evicted = self.fb.victim()
            del self.recency[evicted]
            f = self.fb.remove(evicted)
            self._remember(self.hist_lru if use_lru else self.hist_lfu, evicted, f)
        self.recency[block_id] = None
        self.fb.add(block_id, freq)
        return AccessOutcome(False, False, evicted)
