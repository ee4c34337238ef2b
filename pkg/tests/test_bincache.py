import pytest
from hypothesis import given, strategies as st

from cachesim import oracles
from cachesim.bincache import AccessOutcome, BinCache, CacheConfig, priority_to_interval

A, B, C = 101, 102, 103


def test_interval_boundaries():
    cfg = CacheConfig(1, num_bins=4)
    assert cfg.interval_width == pytest.approx(0.4)
    assert priority_to_interval(-1.0, cfg) == 0
    assert priority_to_interval(1.0, cfg) == 4
    assert priority_to_interval(-0.59, cfg) == 1
    assert priority_to_interval(-5.0, cfg) == 0
    assert priority_to_interval(5.0, cfg) == 4


@given(st.floats(-3, 3), st.integers(1, 32))
def test_interval_in_range_and_monotone(p, n):
    cfg = CacheConfig(1, num_bins=n)
    k = priority_to_interval(p, cfg)
    assert 0 <= k <= n
    assert priority_to_interval(p + 0.01, cfg) >= k


@pytest.mark.parametrize("kwargs", [dict(capacity_blocks=0), dict(capacity_blocks=1, num_bins=0),
                                    dict(capacity_blocks=1, priority_low=1, priority_high=1)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        CacheConfig(**kwargs)


def test_constant_priority_matches_lru_by_hand():
    cache = BinCache(CacheConfig(2))
    got = [cache.access(b, 0.5) for b in (A, B, A, C, B)]
    assert got == [AccessOutcome(False), AccessOutcome(False), AccessOutcome(True),
                   AccessOutcome(False, False, B), AccessOutcome(False, False, A)]


def test_bypass_on_full_cache():
    cache = BinCache(CacheConfig(1, num_bins=4))
    cache.access(B, 0.5)
    out = cache.access(A, -0.95)
    assert out == AccessOutcome(False, True, None)
    assert B in cache and A not in cache
    assert cache.stats.bypasses == 1


def test_lowest_interval_admits_when_not_full():
    cache = BinCache(CacheConfig(2, num_bins=4))
    out = cache.access(A, -1.0)
    assert not out.bypassed and A in cache


def test_priority_orders_eviction():
    cache = BinCache(CacheConfig(2, num_bins=2))
    cache.access(A, 0.9)  # k=2 -> bin 1
    cache.access(B, 0.0)  # k=1 -> bin 0, the cursor bin
    assert cache.first_bin == 0
    assert cache.eviction_order() == [B, A]
    assert cache.access(C, 0.9).evicted == B


def test_fifo_head_eviction():
    cache = BinCache(CacheConfig(3, num_bins=1))
    for b in (A, B, C):
        cache.access(b, 0.0)
    assert cache.evict_one() == A
    assert list(cache.bins[0]) == [B, C]


def test_cursor_skips_empty_bins():
    cache = BinCache(CacheConfig(3, num_bins=4))
    cache.access(A, -0.5)  # k=1 -> bin 0
    cache.access(B, 0.3)   # k=3 -> bin 2
    assert cache.first_bin == 0
    assert cache.evict_one() == A
    assert cache.first_bin == 2


def test_evict_empty_raises():
    with pytest.raises(IndexError):
        BinCache(CacheConfig(2)).evict_one()


def test_contains_lifecycle():
    cache = BinCache(CacheConfig(1, num_bins=4))
    cache.access(A, 0.5)
    assert cache.contains(A)
    cache.access(B, 0.5)
    assert not cache.contains(A)
    cache.access(C, -1.0)
    assert not cache.contains(C)


def test_snapshot_dump(tmp_path):
    cache = BinCache(CacheConfig(3, num_bins=2))
    cache.access(A, 0.9)
    cache.access(B, -0.5)
    cache.access(C, -0.5)
    assert cache.snapshot() == [(0, 0, B), (0, 1, C), (1, 0, A)]
    p = tmp_path / "snap.csv"
    cache.dump_snapshot(p)
    assert p.read_text().splitlines() == [f"0,0,{B}", f"0,1,{C}", f"1,0,{A}"]


ops = st.lists(st.tuples(st.integers(0, 30), st.floats(-1.2, 1.2)), max_size=300)


@given(ops, st.integers(1, 12), st.integers(1, 12))
def test_invariants_hold_after_every_access(seq, cap, n):
    cache = BinCache(CacheConfig(cap, num_bins=n))
    for b, p in seq:
        predicted = cache.eviction_order()[0] if len(cache) == cap else None
        was_in = b in cache
        out = cache.access(b, p)
        cache.audit()
        assert out.hit == was_in
        if out.evicted is not None:
            assert out.evicted == predicted
        if out.bypassed:
            assert len(cache) == cap and cache.interval(p) == 0
    s = cache.stats
    assert s.hits + s.misses == len(seq)


@given(st.lists(st.integers(0, 40), max_size=400), st.integers(1, 20),
       st.integers(1, 16), st.data())
def test_constant_priority_is_lru(blocks, cap, n, data):
    cfg = CacheConfig(cap, num_bins=n)
    k = data.draw(st.integers(1, n))
    p = -1.0 + (k + 0.5) * cfg.interval_width
    assert priority_to_interval(p, cfg) == k
    cache = BinCache(cfg)
    got = [(o.hit, o.evicted) for o in (cache.access(b, p) for b in blocks)]
    assert got == oracles.lru_bruteforce(blocks, cap)
