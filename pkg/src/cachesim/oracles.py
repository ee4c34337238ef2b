"""Slow, independent reference computations used by the tests and by
``cachesim selfcheck``. Nothing here shares code with the fast paths it
checks.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


def blocks_touched_bytewise(offset: int, size: int, block_size: int) -> list[int]:
    """Enumerate every byte of the request and collect its block."""
    if size == 0:
        return []
    return np.unique(np.arange(offset, offset + size, dtype=np.int64) // block_size).tolist()


def opt_max_hits(blocks: Sequence[int], capacity: int) -> int:
    """Maximum hit count over every possible eviction decision sequence
    (demand admission, no bypass), by memoized search over cache contents."""
    blocks = tuple(blocks)
    n = len(blocks)

    @lru_cache(maxsize=None)
    def best(t: int, cache: frozenset) -> int:
        if t == n:
            return 0
        b = blocks[t]
        if b in cache:
            return 1 + best(t + 1, cache)
        if len(cache) < capacity:
            return best(t + 1, cache | {b})
        return max(best(t + 1, (cache - {v}) | {b}) for v in cache)

    return best(0, frozenset())


def next_use_bruteforce(blocks: Sequence[int]) -> list[float]:
    out = []
    for t, b in enumerate(blocks):
        nxt = float("inf")
        for u in range(t + 1, len(blocks)):
            if blocks[u] == b:
                nxt = u
                break
        out.append(nxt)
    return out


def lru_bruteforce(blocks: Sequence[int], capacity: int) -> list[tuple[bool, int | None]]:
    """LRU by explicit last-use timestamps; evicts the argmin each time."""
    last: dict[int, int] = {}
    out = []
    for t, b in enumerate(blocks):
        if b in last:
            last[b] = t
            out.append((True, None))
            continue
        victim = None
        if len(last) >= capacity:
            victim = min(last, key=last.get)
            del last[victim]
        last[b] = t
        out.append((False, victim))
    return out


def features_rescan(blocks: Sequence[int], hits: Sequence[bool], window: int,
                    sentinel: float) -> np.ndarray:
    """Raw feature rows (priority column zero) recomputed from the whole
    prefix for every access. Returns an ``(n, 9)`` array."""
    arr = np.asarray(blocks, dtype=np.int64)
    miss = ~np.asarray(hits, dtype=bool)
    n = len(arr)
    rows = np.zeros((n, 9))
    for t in range(n):
        b = arr[t]
        prev = np.flatnonzero(arr[:t] == b)  # earlier touches, ascending
        touches = np.append(prev, t)
        gaps = np.diff(touches) - 1
        rows[t, 0] = b
        rows[t, 1] = 0 if t == 0 else b - arr[t - 1]
        rows[t, 2] = len(touches)
        rows[t, 3] = gaps[-1] if len(gaps) >= 1 else sentinel
        rows[t, 4] = gaps[-2] if len(gaps) >= 2 else sentinel
        rows[t, 5] = gaps.mean() if len(gaps) else sentinel
        lo = max(0, t - window)
        in_win = arr[lo:t] == b
        rows[t, 6] = in_win.sum()
        rows[t, 7] = (in_win & miss[lo:t]).sum()
    return rows


def central_difference(f: Callable[[], float], x: np.ndarray, idx: tuple, h: float = 1e-5) -> float:
    """d f / d x[idx] by central differences; ``x`` is perturbed in place
    and restored."""
    old = x[idx]
    x[idx] = old + h
    fp = f()
    x[idx] = old - h
    fm = f()
    x[idx] = old
    return (fp - fm) / (2 * h)


def rel_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def check_gradients(loss: Callable[[], float], pairs, rng: np.random.Generator,
                    n_coords: int = 8, h: float = 1e-5,
                    kink_tol: float = 1e-3) -> tuple[float, int]:
    """Worst relative error between analytic gradients and central
    differences over ``n_coords`` random entries of each array.

    ``pairs`` holds ``(array, analytic_grad)``; arrays are perturbed in place.
    A coordinate whose difference quotients at ``h`` and ``h / 10`` disagree
    by more than ``kink_tol`` has a ReLU kink inside the step, so the finite
    difference is meaningless there; such coordinates are skipped and
    counted. Returns ``(worst_error, skipped)``.
    """
    worst, skipped = 0.0, 0
    for arr, grad in pairs:
        flat = rng.choice(arr.size, size=min(n_coords, arr.size), replace=False)
        for f in flat:
            idx = np.unravel_index(f, arr.shape)
            num = central_difference(loss, arr, idx, h)
            if rel_error(num, central_difference(loss, arr, idx, h / 10)) > kink_tol:
                skipped += 1
                continue
            worst = max(worst, rel_error(float(grad[idx]), num))
    return worst, skipped
