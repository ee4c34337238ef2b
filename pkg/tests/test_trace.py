import numpy as np
import pytest
from hypothesis import given, strategies as st

from cachesim import oracles
from cachesim.trace import (AccessRecord, Op, TraceMeta, TraceParseError, open_trace,
                            parse_msr_blocks, parse_msr_line, read_canonical, read_msr,
                            synth_cyclic, synth_uniform, synth_zipf, trace_meta,
                            write_canonical, zipf_pmf)


def msr(offset, size, kind="Read"):
    return f"128166372003061629,hm,1,{kind},{offset},{size},1331"


def ids(records):
    return [r.block_id for r in records]


def test_aligned_single_block():
    recs = parse_msr_line(msr(8192, 4096))
    assert ids(recs) == [2]
    assert recs[0].op is Op.READ


def test_straddle_two_blocks():
    assert ids(parse_msr_line(msr(4095, 2))) == [0, 1]


def test_four_blocks_matches_bytewise():
    assert ids(parse_msr_line(msr(0, 16384))) == [0, 1, 2, 3]
    assert ids(parse_msr_line(msr(0, 16384))) == oracles.blocks_touched_bytewise(0, 16384, 4096)


def test_zero_size_touches_nothing():
    assert parse_msr_line(msr(4096, 0)) == []


def test_write_and_seq_numbering():
    recs = parse_msr_line(msr(0, 8192, "Write"), start_seq=10)
    assert [r.seq for r in recs] == [10, 11]
    assert all(r.op is Op.WRITE for r in recs)


@pytest.mark.parametrize("line", [
    "1,hm,1,Read,0",
    "1,hm,1,Erase,0,4096,1",
    "1,hm,1,Read,zero,4096,1",
    "1,hm,1,Read,-4096,4096,1",
])
def test_malformed_lines_raise(line):
    with pytest.raises(TraceParseError):
        parse_msr_blocks(line, lineno=7)


def test_parse_error_carries_line_number(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(msr(0, 4096) + "\n" + "1,hm,1,Read\n")
    with pytest.raises(TraceParseError) as exc:
        list(read_msr(p))
    assert exc.value.lineno == 2


@given(offset=st.integers(0, 1 << 30), size=st.integers(1, 1 << 18),
       shift=st.integers(9, 14))
def test_expansion_matches_bytewise_oracle(offset, size, shift):
    bs = 1 << shift
    got = [b for b, _ in parse_msr_blocks(msr(offset, size), bs)]
    assert got == oracles.blocks_touched_bytewise(offset, size, bs)
    # coverage bound on every parsed line
    assert size <= len(got) * bs <= size + 2 * (bs - 1)


def test_non_power_of_two_block_size_rejected(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text(msr(0, 4096) + "\n")
    with pytest.raises(ValueError):
        list(read_msr(p, block_size=3000))


def test_read_msr_skips_header_and_limits(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime\n"
                 + msr(0, 16384) + "\n" + msr(4096, 4096) + "\n")
    assert ids(read_msr(p)) == [0, 1, 2, 3, 1]
    assert ids(read_msr(p, limit=3)) == [0, 1, 2]
    assert [r.seq for r in read_msr(p)] == list(range(5))


def test_cyclic_definition():
    assert ids(synth_cyclic(3, 7)) == [0, 1, 2, 0, 1, 2, 0]
    assert ids(synth_cyclic(2, 2)) == [0, 1]


def test_cyclic_defeats_lru_one_short():
    hits = [h for h, _ in oracles.lru_bruteforce(ids(synth_cyclic(5, 10)), 4)]
    assert sum(hits) == 0


@pytest.mark.parametrize("m,n", [(1, 5), (3, 0)])
def test_cyclic_bad_args(m, n):
    with pytest.raises(ValueError):
        list(synth_cyclic(m, n))


def test_zipf_single_block():
    assert set(ids(synth_zipf(1, 50, 1.0))) == {0}


def test_zipf_head_mass():
    s, n = 1.2, 1000
    mass0 = 1.0 / sum(k ** -s for k in range(1, n + 1))
    assert zipf_pmf(n, s)[0] == pytest.approx(mass0)
    counts = np.bincount(ids(synth_zipf(n, 10**6, s, seed=3)), minlength=n)
    assert abs(counts[0] / 1e6 - mass0) <= 0.1 * mass0


@given(st.integers(1, 50), st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_synthetic_generators_are_pure(n, length, seed):
    assert ids(synth_zipf(n, length, 0.9, seed)) == ids(synth_zipf(n, length, 0.9, seed))
    u = ids(synth_uniform(n, length, seed))
    assert u == ids(synth_uniform(n, length, seed))
    assert all(0 <= b < n for b in u)


def test_canonical_roundtrip(tmp_path):
    recs = [AccessRecord(0, 5), AccessRecord(1, 9, Op.WRITE), AccessRecord(2, 5)]
    p = tmp_path / "c.csv"
    assert write_canonical(recs, p) == 3
    assert list(read_canonical(p)) == recs
    assert list(open_trace(p)) == recs
    assert list(open_trace(p, limit=2)) == recs[:2]


def test_open_trace_dispatches_msr(msr_fixture):
    a = list(open_trace(msr_fixture, limit=500))
    b = list(read_msr(msr_fixture, limit=500))
    assert a == b and len(a) == 500


def test_replay_is_pure(msr_fixture):
    assert list(read_msr(msr_fixture)) == list(read_msr(msr_fixture))


def test_trace_meta():
    meta = trace_meta("c", synth_cyclic(4, 10))
    assert (meta.length, meta.unique_blocks) == (10, 4)
    with pytest.raises(ValueError):
        TraceMeta("x", 2, 3)
