import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cachesim import oracles
from cachesim.baselines import LFU, LRU, NEVER, OPT, LeCaR, lecar_discount, next_use_table
from cachesim.bincache import AccessOutcome

A, B, C = 1, 2, 3


def replay(policy, blocks):
    return [policy.request(b) for b in blocks]


def test_lru_by_hand():
    got = replay(LRU(2), [A, B, A, C, B])
    assert [o.hit for o in got] == [False, False, True, False, False]
    assert [o.evicted for o in got] == [None, None, None, B, A]
    assert [o.hit for o in replay(LRU(3), [A, A, A])] == [False, True, True]


def test_lru_cyclic_one_short():
    blocks = [t % 5 for t in range(50)]
    assert sum(o.hit for o in replay(LRU(4), blocks)) == 0


@given(st.lists(st.integers(0, 20), max_size=300), st.integers(1, 10))
def test_lru_matches_timestamp_oracle(blocks, cap):
    got = [(o.hit, o.evicted) for o in replay(LRU(cap), blocks)]
    assert got == oracles.lru_bruteforce(blocks, cap)


def test_lfu_by_hand():
    got = replay(LFU(2), [A, A, B, C])
    assert got[3].evicted == B
    got = replay(LFU(1), [A, B, A])
    assert [(o.hit, o.evicted) for o in got] == [(False, None), (False, A), (False, B)]


def test_lfu_tie_evicts_least_recent():
    assert replay(LFU(2), [A, B, C])[2].evicted == A


def lfu_oracle(blocks, cap):
    """LFU by explicit (count, last touch) minimum."""
    count, last, out = {}, {}, []
    for t, b in enumerate(blocks):
        if b in count:
            count[b] += 1
            last[b] = t
            out.append((True, None))
            continue
        victim = None
        if len(count) >= cap:
            victim = min(count, key=lambda k: (count[k], last[k]))
            del count[victim], last[victim]
        count[b], last[b] = 1, t
        out.append((False, victim))
    return out


@given(st.lists(st.integers(0, 15), max_size=300), st.integers(1, 8))
def test_lfu_matches_oracle(blocks, cap):
    assert [(o.hit, o.evicted) for o in replay(LFU(cap), blocks)] == lfu_oracle(blocks, cap)


def test_next_use_by_hand():
    assert next_use_table([A, B, A]) == [2, NEVER, NEVER]
    assert next_use_table([A, A, A]) == [1, 2, NEVER]
    assert NEVER == math.inf


def test_next_use_matches_forward_scan():
    blocks = np.random.default_rng(0).integers(0, 60, 1000).tolist()
    assert next_use_table(blocks) == oracles.next_use_bruteforce(blocks)


def test_opt_by_hand():
    got = replay(OPT(2, [A, B, A, C, B]), [A, B, A, C, B])
    assert [o.hit for o in got] == [False, False, True, False, True]
    assert got[3].evicted == A
    assert oracles.opt_max_hits([A, B, A, C, B], 2) == 2


def test_opt_tie_prefers_larger_block():
    # B and C are never used again when D arrives; the larger id goes
    blocks = [A, B, C, A, 4, A]
    got = replay(OPT(3, blocks), blocks)
    assert got[4].evicted == C


def test_opt_rejects_wrong_access():
    opt = OPT(2, [A, B])
    with pytest.raises(ValueError):
        opt.request(B)
    opt = OPT(2, [A, B])
    with pytest.raises(ValueError):
        opt.request(A, t=1)


@given(st.lists(st.integers(0, 3), max_size=12), st.integers(1, 3))
def test_opt_matches_exhaustive(blocks, cap):
    assert sum(o.hit for o in replay(OPT(cap, blocks), blocks)) == oracles.opt_max_hits(blocks, cap)


@given(st.lists(st.integers(0, 40), min_size=1, max_size=400))
def test_opt_compulsory_only_when_everything_fits(blocks):
    unique = len(set(blocks))
    hits = sum(o.hit for o in replay(OPT(unique, blocks), blocks))
    assert hits == len(blocks) - unique


@given(st.lists(st.integers(0, 25), max_size=400), st.integers(1, 12), st.integers(0, 99))
def test_opt_dominates_online_baselines(blocks, cap, seed):
    opt = sum(o.hit for o in replay(OPT(cap, blocks), blocks))
    for pol in (LRU(cap), LFU(cap), LeCaR(cap, seed=seed)):
        assert opt >= sum(o.hit for o in replay(pol, blocks))


@given(st.lists(st.integers(0, 25), max_size=300), st.integers(1, 10))
def test_opt_monotone_in_capacity(blocks, cap):
    small = sum(o.hit for o in replay(OPT(cap, blocks), blocks))
    big = sum(o.hit for o in replay(OPT(cap + 1, blocks), blocks))
    assert big >= small


def test_lecar_initial_weights_and_discount():
    assert LeCaR(16).weights == (0.5, 0.5)
    assert lecar_discount(16) == pytest.approx(0.002 ** 0.5)
    assert lecar_discount(16) == pytest.approx(0.04472, abs=1e-5)


@given(st.lists(st.integers(0, 30), max_size=400), st.integers(1, 10), st.integers(0, 50))
def test_lecar_reproducible_and_weights_valid(blocks, cap, seed):
    a, b = LeCaR(cap, seed=seed), LeCaR(cap, seed=seed)
    for blk in blocks:
        assert a.request(blk) == b.request(blk)
        w_lru, w_lfu = a.weights
        assert 0.01 <= w_lru <= 0.99 and w_lru + w_lfu == pytest.approx(1.0)
        assert len(a.hist_lru) <= cap and len(a.hist_lfu) <= cap
        assert len(a.recency) <= cap


def hot_plus_scan(seed, n=50_000, hot=18, p_hot=0.6):
    rng = np.random.default_rng(seed)
    fresh = iter(range(1000, 10**9))
    return [int(rng.integers(0, hot)) if rng.random() < p_hot else next(fresh) for _ in range(n)]


def test_lecar_learns_lfu_on_frequency_friendly_workload():
    won = 0
    for seed in range(5):
        pol = LeCaR(20, seed=seed)
        for b in hot_plus_scan(seed):
            pol.request(b)
        won += pol.weights[1] > 0.9
    assert won >= 4


@pytest.mark.parametrize("cls", [LRU, LFU])
def test_capacity_validation(cls):
    with pytest.raises(ValueError):
        cls(0)


def test_hit_outcome_shape():
    out = LRU(1).request(A)
    assert out == AccessOutcome(False)
