"""Trace-driven runs, metrics and parameter sweeps."""
from __future__ import annotations

import csv
import itertools
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agent import AgentConfig, PhoebePolicy
from .baselines import LFU, LRU, OPT, LeCaR
from .features import FeatureConfig
from .trace import DEFAULT_BLOCK_SIZE, open_trace, synth_cyclic, synth_uniform, synth_zipf

log = logging.getLogger(__name__)

POLICIES = ("lru", "lfu", "opt", "lecar", "phoebe")
CURVE_WINDOW = 25_000


class UndefinedMetricError(ValueError):
    def __init__(self, r: float, r_base: float, r_opt: float):
        self.operands = (r, r_base, r_opt)
        super().__init__(f"relative miss rate undefined: r_base={r_base} <= r_opt={r_opt} (r={r})")


def relative_miss_rate(r: float, r_base: float, r_opt: float) -> float:
    """Fraction of the baseline-to-optimal miss-rate gap closed by ``r``."""
    if not r_base > r_opt:
        raise UndefinedMetricError(r, r_base, r_opt)
    return (r_base - r) / (r_base - r_opt)


def windowed_series(hits: Sequence[bool], window: int = CURVE_WINDOW) -> list[tuple[int, float]]:
    """Hit rate over consecutive non-overlapping windows; the last, possibly
    partial, window is averaged over its own length."""
    if window < 1:
        raise ValueError("window must be >= 1")
    h = np.asarray(hits, dtype=np.float64)
    return [(s, float(h[s:s + window].mean())) for s in range(0, len(h), window)]


def reuse_distances(blocks: Sequence[int]) -> np.ndarray:
    """Backward reuse distance per access (NaN on first touch)."""
    last: dict[int, int] = {}
    out = np.full(len(blocks), np.nan)
    for t, b in enumerate(blocks):
        p = last.get(b)
        if p is not None:
            out[t] = t - p - 1
        last[b] = t
    return out


def windowed_mean_reuse(blocks: Sequence[int], window: int = CURVE_WINDOW) -> list[tuple[int, float]]:
    rd = reuse_distances(blocks)
    out = []
    for s in range(0, len(rd), window):
        chunk = rd[s:s + window]
        chunk = chunk[~np.isnan(chunk)]
        out.append((s, float(chunk.mean()) if len(chunk) else math.nan))
    return out


def parse_capacity(text: str | int, block_size: int = DEFAULT_BLOCK_SIZE) -> int:
    """``"64MB"`` -> blocks (powers of 1024); a bare number is a block count."""
    if isinstance(text, int):
        blocks = text
    else:
        s = text.strip().upper()
        mult = {"KB": 1 << 10, "MB": 1 << 20, "GB": 1 << 30, "TB": 1 << 40}
        for suffix, m in mult.items():
            if s.endswith(suffix):
                blocks = int(float(s[:-len(suffix)]) * m) // block_size
                break
        else:
            if s.endswith("B"):
                blocks = int(s[:-1]) // block_size
            else:
                blocks = int(s)
    if blocks < 1:
        raise ValueError(f"capacity {text!r} is less than one block")
    return blocks


def load_trace(ref: str, block_size: int = DEFAULT_BLOCK_SIZE,
               limit: int | None = None, seed: int = 0) -> list[int]:
    """Materialize a trace reference as a list of block ids.

    ``ref`` is a file path (MSR CSV or canonical) or one of
    ``synth:cyclic:M:L``, ``synth:zipf:N:L:S``, ``synth:uniform:N:L``;
    synthetic refs may carry a trailing ``:seed``.
    """
    if ref.startswith("synth:"):
        parts = ref.split(":")[1:]
        kind = parts[0]
        if kind == "cyclic":
            m, n = int(parts[1]), int(parts[2])
            gen = synth_cyclic(m, n)
        elif kind == "zipf":
            m, n, s = int(parts[1]), int(parts[2]), float(parts[3])
            gen = synth_zipf(m, n, s, int(parts[4]) if len(parts) > 4 else seed)
        elif kind == "uniform":
            m, n = int(parts[1]), int(parts[2])
            gen = synth_uniform(m, n, int(parts[3]) if len(parts) > 3 else seed)
        else:
            raise ValueError(f"unknown synthetic trace {kind!r}")
        blocks = [r.block_id for r in gen]
        return blocks[:limit] if limit is not None else blocks
    return [r.block_id for r in open_trace(ref, block_size, limit)]


def trace_name(ref: str) -> str:
    return ref if ref.startswith("synth:") else Path(ref).stem


def make_policy(name: str, capacity: int, blocks: Sequence[int] | None = None, seed: int = 0,
                agent_cfg: AgentConfig | None = None, num_bins: int = 10,
                feature_cfg: FeatureConfig | None = None):
    if name == "lru":
        return LRU(capacity)
    if name == "lfu":
        return LFU(capacity)
    if name == "opt":
        if blocks is None:
            raise ValueError("opt needs the full trace")
        return OPT(capacity, blocks)
    if name == "lecar":
        return LeCaR(capacity, seed=seed)
    if name == "phoebe":
        return PhoebePolicy(capacity, agent_cfg, seed, num_bins=num_bins, feature_cfg=feature_cfg)
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")


@dataclass
class RunResult:
    policy: str
    trace: str
    capacity_blocks: int
    hits: int
    misses: int
    bypasses: int
    hit_rate: float
    miss_rate: float
    gamma: float | None = None
    seed: int = 0
    windowed_hit_rates: list[tuple[int, float]] = field(default_factory=list)
    windowed_mean_reuse: list[tuple[int, float]] = field(default_factory=list)
    duration: float = 0.0
    config: dict = field(default_factory=dict)
    hit_flags: np.ndarray | None = field(default=None, repr=False)
    error: str | None = None

    @property
    def label(self) -> str:
        return self.policy if self.gamma is None else f"{self.policy}@{self.gamma:g}"


def run(policy: str, blocks: Sequence[int], capacity: int, seed: int = 0,
        agent_cfg: AgentConfig | None = None, gamma: float | None = None,
        trace: str = "trace", num_bins: int = 10, warmup: int = 0,
        window: int = CURVE_WINDOW, keep_flags: bool = False,
        feature_cfg: FeatureConfig | None = None, instance=None) -> RunResult:
    """Replay ``blocks`` through one policy. Accesses before ``warmup`` are
    replayed but not counted.

    ``instance`` replaces the freshly built policy object, e.g. a phoebe
    policy whose agent was restored from a checkpoint.
    """
    if capacity < 1:
        raise ValueError("capacity must be >= 1 block")
    if policy == "phoebe":
        agent_cfg = agent_cfg or AgentConfig()
        if gamma is not None:
            agent_cfg = replace(agent_cfg, gamma=gamma)
        gamma = agent_cfg.gamma
    else:
        gamma = None
    t0 = time.perf_counter()
    pol = instance or make_policy(policy, capacity, blocks, seed, agent_cfg, num_bins, feature_cfg)
    n = len(blocks)
    hits = np.zeros(n, dtype=bool)
    bypasses = 0
    request = pol.request
    for t, b in enumerate(blocks):
        out = request(b)
        if out.hit:
            hits[t] = True
        elif out.bypassed and t >= warmup:
            bypasses += 1
    if hasattr(pol, "finish"):
        pol.finish()
    counted = hits[warmup:]
    nh = int(counted.sum())
    total = len(counted)
    config = {"policy": policy, "capacity_blocks": capacity, "seed": seed,
              "num_bins": num_bins, "warmup": warmup}
    if policy == "phoebe":
        config["agent"] = asdict(agent_cfg)
    return RunResult(
        policy=policy, trace=trace, capacity_blocks=capacity,
        hits=nh, misses=total - nh, bypasses=bypasses,
        hit_rate=nh / total if total else 0.0,
        miss_rate=(total - nh) / total if total else 0.0,
        gamma=gamma, seed=seed,
        windowed_hit_rates=windowed_series(hits, window) if n else [],
        windowed_mean_reuse=windowed_mean_reuse(blocks, window) if n else [],
        duration=time.perf_counter() - t0, config=config,
        hit_flags=hits if keep_flags else None)


@dataclass
class SweepSpec:
    traces: list[str]
    policies: list[str]
    capacities: list[int | str]
    gammas: list[float] = field(default_factory=lambda: [0.95])
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str | None = None
    block_size: int = DEFAULT_BLOCK_SIZE
    limit: int | None = None
    workers: int = 1
    num_bins: int = 10
    warmup: int = 0
    agent: AgentConfig = field(default_factory=AgentConfig)
    features: FeatureConfig | None = None

    def __post_init__(self):
        for what in ("traces", "policies", "capacities", "gammas", "seeds"):
            if not getattr(self, what):
                raise ValueError(f"sweep needs a non-empty {what} list")
        for p in self.policies:
            if p not in POLICIES:
                raise ValueError(f"unknown policy {p!r}; choose from {', '.join(POLICIES)}")
        caps = [parse_capacity(c, self.block_size) for c in self.capacities]
        if any(b <= a for a, b in zip(caps, caps[1:])):
            raise ValueError("capacities must be strictly increasing")

    def cells(self) -> list[tuple[str, str, int, float | None, int]]:
        caps = [parse_capacity(c, self.block_size) for c in self.capacities]
        out = []
        for tr, pol, cap, seed in itertools.product(self.traces, self.policies, caps, self.seeds):
            for g in (self.gammas if pol == "phoebe" else [None]):
                out.append((tr, pol, cap, g, seed))
        return out


_TRACE_CACHE: dict[tuple, list[int]] = {}


def _run_cell(spec: SweepSpec, cell) -> RunResult:
    tr, pol, cap, g, seed = cell
    key = (tr, spec.block_size, spec.limit)
    try:
        if key not in _TRACE_CACHE:
            _TRACE_CACHE.clear()
            _TRACE_CACHE[key] = load_trace(tr, spec.block_size, spec.limit)
        blocks = _TRACE_CACHE[key]
        return run(pol, blocks, cap, seed, spec.agent, g, trace_name(tr),
                   spec.num_bins, spec.warmup, feature_cfg=spec.features)
    except Exception as exc:  # one broken cell must not sink the sweep
        log.exception("cell %s failed", cell)
        return RunResult(pol, trace_name(tr), cap, 0, 0, 0, math.nan, math.nan, g, seed,
                         error=f"{type(exc).__name__}: {exc}")


def sweep(spec: SweepSpec) -> tuple[list[RunResult], list[dict]]:
    cells = spec.cells()
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as ex:
            results = list(ex.map(_run_cell, itertools.repeat(spec), cells))
    else:
        results = [_run_cell(spec, c) for c in cells]
    rows = summarize(results)
    if spec.out_dir:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_results_csv(results, out / "results.csv")
        write_curves_csv(results, out / "curves.csv")
        write_summary_csv(rows, out / "summary.csv")
    return results, rows


def summarize(results: Iterable[RunResult]) -> list[dict]:
    """Mean miss rate per (trace, capacity, policy label), plus relative
    miss rates against LRU and LeCaR when OPT ran on the same cell."""
    groups: dict[tuple[str, int], dict[str, list[float]]] = {}
    for r in results:
        if r.error:
            continue
        groups.setdefault((r.trace, r.capacity_blocks), {}).setdefault(r.label, []).append(r.miss_rate)
    rows = []
    for (tr, cap), by_label in sorted(groups.items()):
        means = {k: float(np.mean(v)) for k, v in by_label.items()}
        r_opt = means.get("opt")
        for label, r in sorted(means.items()):
            row = {"trace": tr, "capacity_blocks": cap, "policy": label, "miss_rate": r}
            if r_opt is not None:
                for base in ("lru", "lecar"):
                    val = None
                    if base in means:
                        try:
                            val = relative_miss_rate(r, means[base], r_opt)
                        except UndefinedMetricError:
                            val = None
                    row[f"rel_miss_{base}"] = val
            rows.append(row)
    return rows


RESULT_FIELDS = ["trace", "policy", "capacity_blocks", "gamma", "seed", "hits", "misses",
                 "bypasses", "hit_rate", "miss_rate"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results_csv(results: Iterable[RunResult], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_FIELDS)
        for r in results:
            w.writerow([_fmt(getattr(r, f)) for f in RESULT_FIELDS])


def write_curves_csv(results: Iterable[RunResult], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trace", "policy", "window_start", "hit_rate", "mean_reuse_distance"])
        for r in results:
            reuse = dict(r.windowed_mean_reuse)
            for start, rate in r.windowed_hit_rates:
                w.writerow([r.trace, r.label, start, _fmt(rate), _fmt(reuse.get(start))])


def write_summary_csv(rows: list[dict], path: str | os.PathLike) -> None:
    cols = ["trace", "capacity_blocks", "policy", "miss_rate"]
    if any("rel_miss_lru" in r for r in rows):
        cols += ["rel_miss_lru", "rel_miss_lecar"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])
