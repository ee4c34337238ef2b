"""Per-access reuse features and the sliding state matrix fed to the agent.

Channel order (rows of the state matrix)::

    0 addr            block id
    1 addr_delta      block id minus the previous access's block id
    2 freq            accesses to this block so far, current one included
    3 reuse_dist      accesses strictly between this touch and the previous one
    4 penult_reuse    same, between the previous and the second-previous touch
    5 avg_reuse       mean of all reuse distances of this block, current included
    6 win_freq        touches of this block among the preceding H accesses
    7 win_misses      misses of this block among the preceding H accesses
    8 priority        action assigned to the access (0 until the agent acts)

Distances that do not exist yet (first or second touch) take the sentinel
value ``2 * H``.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .bincache import AccessOutcome
from .trace import AccessRecord

NUM_FEATURES = 9
CHANNELS = ("addr", "addr_delta", "freq", "reuse_dist", "penult_reuse_dist",
            "avg_reuse_dist", "win_freq", "win_misses", "priority")
PRIORITY = 8


class FeatureError(RuntimeError):
    """Raised when the observe/record_outcome/set_priority protocol is broken."""


class FeatureRow(NamedTuple):
    addr: float
    addr_delta: float
    freq: float
    reuse_dist: float
    penult_reuse_dist: float
    avg_reuse_dist: float
    win_freq: float
    win_misses: float
    priority: float


@dataclass(frozen=True)
class FeatureConfig:
    window: int = 100          # H
    history: int = 100         # columns in the state matrix
    sentinel: float | None = None  # defaults to 2 * window
    addr_modulus: int = 1 << 20
    delta_scale: float = float(1 << 20)
    log_scale: float = 10.0

    def __post_init__(self):
        if self.window < 1 or self.history < 1:
            raise ValueError("window and history must be >= 1")

    @property
    def sentinel_value(self) -> float:
        return float(2 * self.window) if self.sentinel is None else float(self.sentinel)


def reuse_gap(seq: int, prev: int) -> int:
    """Accesses strictly between two touches at indices ``prev < seq``."""
    return seq - prev - 1


def normalize_row(row: Iterable[float], cfg: FeatureConfig) -> list[float]:
    """Squash a raw row into [-1, 1]. Depends on nothing but the row."""
    addr, delta, freq, rd, prd, ard, wf, wm, prio = row
    m = cfg.addr_modulus
    ls = cfg.log_scale
    return [
        2.0 * ((int(addr) % m) / m) - 1.0,
        math.tanh(delta / cfg.delta_scale),
        math.tanh(math.log1p(freq) / ls),
        math.tanh(math.log1p(rd) / ls),
        math.tanh(math.log1p(prd) / ls),
        math.tanh(math.log1p(ard) / ls),
        math.tanh(math.log1p(wf) / ls),
        math.tanh(math.log1p(wm) / ls),
        min(1.0, max(-1.0, prio)),
    ]


class FeatureState:
    """Running statistics for one trace replay.

    Protocol per access: ``observe`` -> (``state``) -> (``set_priority``)
    -> ``record_outcome``. ``record_outcome`` must happen before the next
    ``observe``.
    """

    def __init__(self, cfg: FeatureConfig | None = None):
        self.cfg = cfg or FeatureConfig()
        self.last_access: dict[int, int] = {}
        self.second_last_access: dict[int, int] = {}
        self.global_freq: dict[int, int] = {}
        self.reuse_sum: dict[int, int] = {}
        self.reuse_count: dict[int, int] = {}
        self.window: deque[tuple[int, bool]] = deque()
        self._win_freq: dict[int, int] = {}
        self._win_miss: dict[int, int] = {}
        self.prev_addr: int | None = None
        self.last_seq = -1
        self.history: deque[FeatureRow] = deque(maxlen=self.cfg.history)
        L = self.cfg.history
        self._cols = np.zeros((NUM_FEATURES, L))
        self._head = 0  # next column slot to write
        self._current: int | None = None  # block awaiting record_outcome
        self._priority_pending = False

    @property
    def accesses(self) -> int:
        return self.last_seq + 1

    def observe(self, record: AccessRecord) -> FeatureRow:
        if record.seq <= self.last_seq:
            raise FeatureError(f"seq {record.seq} is not after {self.last_seq}")
        if self._current is not None:
            raise FeatureError("record_outcome was not called for the previous access")
        seq, b = record.seq, record.block_id
        S = self.cfg.sentinel_value

        freq = self.global_freq.get(b, 0) + 1
        self.global_freq[b] = freq
        last = self.last_access.get(b)
        if last is None:
            rd = prd = ard = S
        else:
            gap = reuse_gap(seq, last)
            rd = float(gap)
            second = self.second_last_access.get(b)
            prd = S if second is None else float(reuse_gap(last, second))
            self.second_last_access[b] = last
            total = self.reuse_sum.get(b, 0) + gap
            count = self.reuse_count.get(b, 0) + 1
            self.reuse_sum[b] = total
            self.reuse_count[b] = count
            ard = total / count
        self.last_access[b] = seq

        delta = 0.0 if self.prev_addr is None else float(b - self.prev_addr)
        self.prev_addr = b
        row = FeatureRow(float(b), delta, float(freq), rd, prd, ard,
                         float(self._win_freq.get(b, 0)),
                         float(self._win_miss.get(b, 0)), 0.0)

        self.history.append(row)
        self._cols[:, self._head] = normalize_row(row, self.cfg)
        self._head = (self._head + 1) % self.cfg.history
        self.last_seq = seq
        self._current = b
        self._priority_pending = True
        return row

    def record_outcome(self, block_id: int, outcome: AccessOutcome | bool) -> None:
        """Push the access into the sliding window. ``outcome`` may be a bare
        hit flag."""
        if self._current is None:
            raise FeatureError("record_outcome without a pending access")
        if block_id != self._current:
            raise FeatureError(f"outcome for block {block_id}, pending {self._current}")
        hit = outcome if isinstance(outcome, bool) else outcome.hit
        self._current = None
        self.window.append((block_id, not hit))
        self._win_freq[block_id] = self._win_freq.get(block_id, 0) + 1
        if not hit:
            self._win_miss[block_id] = self._win_miss.get(block_id, 0) + 1
        if len(self.window) > self.cfg.window:
            old, was_miss = self.window.popleft()
            self._dec(self._win_freq, old)
            if was_miss:
                self._dec(self._win_miss, old)

    @staticmethod
    def _dec(counter: dict[int, int], key: int) -> None:
        n = counter[key] - 1
        if n:
            counter[key] = n
        else:
            del counter[key]

    def set_priority(self, priority: float) -> None:
        if not self._priority_pending:
            raise FeatureError("set_priority without a freshly observed access")
        self._priority_pending = False
        self.history[-1] = self.history[-1]._replace(priority=float(priority))
        newest = (self._head - 1) % self.cfg.history
        self._cols[PRIORITY, newest] = min(1.0, max(-1.0, float(priority)))

    def state(self) -> np.ndarray:
        """The ``9 x history`` matrix, oldest column first, newest priority zeroed."""
        if self.last_seq < 0:
            raise FeatureError("state() before any access was observed")
        h = self._head
        m = np.concatenate((self._cols[:, h:], self._cols[:, :h]), axis=1)
        m[PRIORITY, -1] = 0.0
        return m


def write_feature_csv(path, rows: Iterable[FeatureRow]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CHANNELS)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
            n += 1
    return n


def replay_features(records: Iterable[AccessRecord], hits: Iterable[bool],
                    cfg: FeatureConfig | None = None) -> list[FeatureRow]:
    """Raw rows for a trace given the per-access hit flags of some policy."""
    fs = FeatureState(cfg)
    rows = []
    for rec, hit in zip(records, hits):
        rows.append(fs.observe(rec))
        fs.record_outcome(rec.block_id, bool(hit))
    return rows
