import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cachesim import sim
from cachesim.agent import AgentConfig
from cachesim.sim import (RunResult, SweepSpec, UndefinedMetricError, parse_capacity,
                          relative_miss_rate, run, summarize, sweep, windowed_series)

TINY = AgentConfig(conv_filters=2, fc1=8, fc2=4, history=24, batch_size=8, replay_capacity=500)


def test_relative_miss_rate_operands():
    assert relative_miss_rate(0.3594, 0.50, 0.30) == pytest.approx(0.703, abs=1e-3)


@given(st.floats(0, 1), st.floats(0, 1))
def test_relative_miss_rate_identities(a, b):
    r_opt, r_base = min(a, b), max(a, b)
    if r_base == r_opt:
        with pytest.raises(UndefinedMetricError):
            relative_miss_rate(r_opt, r_base, r_opt)
        return
    assert relative_miss_rate(r_opt, r_base, r_opt) == 1.0
    assert relative_miss_rate(r_base, r_base, r_opt) == 0.0


def test_windowed_series():
    assert windowed_series([True, False, True, True], 3) == [(0, pytest.approx(2 / 3)), (3, 1.0)]
    assert len(windowed_series([True] * 50_000)) == 2
    assert all(r == 1.0 for _, r in windowed_series([True] * 50_000))


@pytest.mark.parametrize("text,blocks", [("64MB", 16384), ("4KB", 1), ("1GB", 262144),
                                         ("512", 512), (7, 7), ("8192B", 2)])
def test_parse_capacity(text, blocks):
    assert parse_capacity(text) == blocks


@pytest.mark.parametrize("text", ["0", "1KB", "abc"])
def test_parse_capacity_rejects(text):
    with pytest.raises(ValueError):
        parse_capacity(text)


def test_lru_hand_run():
    res = run("lru", [1, 2, 1, 3, 2], 2)
    assert res.hit_rate == pytest.approx(0.2)
    assert (res.hits, res.misses) == (1, 4)


@given(st.lists(st.integers(0, 30), min_size=1, max_size=300))
def test_opt_compulsory_misses(blocks):
    res = run("opt", blocks, len(set(blocks)))
    assert res.misses == len(set(blocks))


@pytest.mark.parametrize("policy", sim.POLICIES)
def test_counters_conserved(policy):
    blocks = sim.load_trace("synth:zipf:50:600:0.8:1")
    res = run(policy, blocks, 10, agent_cfg=TINY)
    assert res.hits + res.misses == len(blocks)
    assert res.bypasses <= res.misses


def test_warmup_excluded():
    blocks = [1, 2, 1, 2, 1, 2]
    res = run("lru", blocks, 2, warmup=2)
    assert (res.hits, res.misses) == (4, 0)


def test_unknown_policy():
    with pytest.raises(ValueError, match="lru, lfu, opt, lecar, phoebe"):
        run("nosuch", [1], 1)


def strip(res: RunResult):
    d = dict(vars(res))
    d.pop("duration")
    d.pop("hit_flags")
    return d


def test_phoebe_run_deterministic():
    blocks = sim.load_trace("synth:uniform:20:500:4")
    a = run("phoebe", blocks, 6, seed=3, agent_cfg=TINY)
    b = run("phoebe", blocks, 6, seed=3, agent_cfg=TINY)
    assert strip(a) == strip(b)


def test_load_trace_refs(tmp_path):
    assert sim.load_trace("synth:cyclic:3:5") == [0, 1, 2, 0, 1]
    assert sim.load_trace("synth:uniform:5:10:1") == sim.load_trace("synth:uniform:5:10", seed=1)
    assert len(sim.load_trace("synth:zipf:5:10:1.1", limit=4)) == 4
    with pytest.raises(ValueError):
        sim.load_trace("synth:nosuch:1:1")


def test_sweep_counts_and_gamma_scope(tmp_path):
    spec = SweepSpec(traces=["synth:zipf:40:400:0.9:0"], policies=["lru", "opt", "phoebe"],
                     capacities=[4, 8, 16], gammas=[0.925, 0.99], out_dir=str(tmp_path),
                     agent=TINY)
    cells = spec.cells()
    assert sum(c[1] == "phoebe" for c in cells) == 6
    assert all(c[3] is None for c in cells if c[1] != "phoebe")
    results, rows = sweep(spec)
    assert len(results) == 12
    assert {r["policy"] for r in rows} == {"lru", "opt", "phoebe@0.925", "phoebe@0.99"}
    for r in rows:
        if r["policy"] == "opt":
            assert r["rel_miss_lru"] == 1.0
    for name in ("results.csv", "curves.csv", "summary.csv"):
        assert (tmp_path / name).exists()


def test_sweep_lru_opt_denominators():
    spec = SweepSpec(traces=["synth:zipf:40:400:0.9:0"], policies=["lru", "opt"],
                     capacities=[2, 4, 8])
    results, rows = sweep(spec)
    assert len(results) == 6
    assert sum(r["policy"] == "lru" and r["rel_miss_lru"] == 0.0 for r in rows) == 3


def test_opt_monotone_over_sweep_capacities():
    spec = SweepSpec(traces=["synth:zipf:200:3000:0.8:5"], policies=["opt"],
                     capacities=[1, 4, 16, 64, 200])
    rates = [r.hit_rate for r in sweep(spec)[0]]
    assert rates == sorted(rates)


def test_sweep_cells_order_independent():
    spec = SweepSpec(traces=["synth:uniform:30:300:1"], policies=["lru", "lecar", "phoebe"],
                     capacities=[4, 8], agent=TINY)
    cells = spec.cells()
    fwd = {c: strip(sim._run_cell(spec, c)) for c in cells}
    rev = {c: strip(sim._run_cell(spec, c)) for c in reversed(cells)}
    assert fwd == rev


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(traces=[], policies=["lru"], capacities=[1])
    with pytest.raises(ValueError):
        SweepSpec(traces=["x"], policies=["lru"], capacities=[8, 4])
    with pytest.raises(ValueError):
        SweepSpec(traces=["x"], policies=["belady"], capacities=[4])


def test_broken_cell_is_reported(tmp_path):
    spec = SweepSpec(traces=[str(tmp_path / "missing.csv")], policies=["lru"], capacities=[4])
    results, rows = sweep(spec)
    assert results[0].error and "FileNotFoundError" in results[0].error
    assert rows == []


def test_summary_skips_undefined_ratio():
    mk = lambda p, miss: RunResult(p, "t", 4, 0, 0, 0, 1 - miss, miss)
    rows = summarize([mk("lru", 0.4), mk("opt", 0.4), mk("lfu", 0.5)])
    assert all(r["rel_miss_lru"] is None for r in rows)


def test_results_csv_roundtrip(tmp_path):
    res = [run("lru", [1, 2, 1], 1), run("opt", [1, 2, 1], 1)]
    p = tmp_path / "r.csv"
    sim.write_results_csv(res, p)
    lines = p.read_text().splitlines()
    assert lines[0].split(",") == sim.RESULT_FIELDS
    assert len(lines) == 3


def test_mean_reuse_curve():
    blocks = [0, 1, 0, 1]
    assert list(sim.reuse_distances(blocks)[2:]) == [1, 1]
    assert sim.windowed_mean_reuse(blocks, 4) == [(0, 1.0)]
