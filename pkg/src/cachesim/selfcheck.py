"""Oracle suites run by ``cachesim selfcheck``.

Each suite returns a :class:`SuiteResult`; a failing suite carries the
first offending case as a JSON-able dict so it can be replayed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn, oracles
from .agent import AgentConfig, Critic, build_actor
from .baselines import LRU, OPT
from .bincache import BinCache, CacheConfig
from .features import FeatureConfig, replay_features
from .sim import POLICIES, load_trace, run
from .trace import from_blocks


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    case: dict | None = field(default=None)


def opt_exhaustive(n_traces: int = 10_000, seed: int = 0) -> SuiteResult:
    """OPT hit counts against exhaustive search, lengths <= 12 over <= 4 blocks."""
    rng = np.random.default_rng(seed)
    checked = 0
    for _ in range(n_traces):
        length = int(rng.integers(1, 13))
        blocks = rng.integers(0, 4, size=length).tolist()
        for cap in (1, 2, 3):
            opt = OPT(cap, blocks)
            got = sum(opt.request(b).hit for b in blocks)
            want = oracles.opt_max_hits(blocks, cap)
            checked += 1
            if got != want:
                return SuiteResult("opt-exhaustive", False, f"OPT {got} hits, best is {want}",
                                   {"blocks": blocks, "capacity": cap})
    return SuiteResult("opt-exhaustive", True, f"{checked} (trace, capacity) cases")


def lru_degeneracy(n_traces: int = 100, length: int = 1000, capacities=(4, 16, 64),
                   seed: int = 0) -> SuiteResult:
    """Constant priority in the bin cache must replay LRU exactly."""
    rng = np.random.default_rng(seed)
    cfg_n = 10
    width = 2.0 / (cfg_n + 1)
    for i in range(n_traces):
        universe = int(rng.integers(2, 200))
        blocks = rng.integers(0, universe, size=length).tolist()
        for cap in capacities:
            k = int(rng.integers(1, cfg_n + 1))
            p = -1.0 + (k + 0.5) * width
            cache = BinCache(CacheConfig(cap, cfg_n))
            lru = LRU(cap)
            for t, b in enumerate(blocks):
                a, e = cache.access(b, p), lru.request(b)
                if (a.hit, a.evicted, a.bypassed) != (e.hit, e.evicted, False):
                    return SuiteResult("lru-degeneracy", False, f"diverged at access {t}",
                                       {"blocks": blocks, "capacity": cap, "priority": p})
    return SuiteResult("lru-degeneracy", True,
                       f"{n_traces} traces x {len(capacities)} capacities")


def feature_rescan(n_traces: int = 100, length: int = 10_000, seed: int = 0) -> SuiteResult:
    """Streaming features against a full-prefix rescan."""
    rng = np.random.default_rng(seed)
    cfg = FeatureConfig()
    for i in range(n_traces):
        universe = int(rng.integers(2, 500))
        blocks = rng.integers(0, universe, size=length).tolist()
        hits = rng.random(length) < 0.5
        rows = np.array(replay_features(from_blocks(blocks), hits.tolist(), cfg))
        want = oracles.features_rescan(blocks, hits, cfg.window, cfg.sentinel_value)
        bad = np.argwhere(rows != want)
        if len(bad):
            t, c = bad[0]
            return SuiteResult("feature-rescan", False,
                               f"trace {i} access {t} channel {c}: {rows[t, c]} != {want[t, c]}",
                               {"blocks": blocks, "hits": hits.tolist(), "access": int(t),
                                "channel": int(c)})
    return SuiteResult("feature-rescan", True, f"{n_traces} traces x {length} accesses")


def _layer_error(layer: nn.Layer, x: np.ndarray, rng, train=True,
                 n_coords=8) -> tuple[float, int]:
    out = layer.forward(x, train=train, update_stats=False)
    R = rng.standard_normal(out.shape)
    for p in layer.params():
        p.zero_grad()
    dx = layer.backward(R)

    def loss():
        return float(np.sum(layer.forward(x, train=train, update_stats=False) * R))

    pairs = [(x, dx)] + [(p.value, p.grad) for p in layer.params()]
    return oracles.check_gradients(loss, pairs, rng, n_coords)


def layer_cases(rng) -> dict[str, tuple[nn.Layer, np.ndarray]]:
    return {
        "conv1x20": (nn.Conv1xK(4, 20, rng), rng.standard_normal((3, 9, 100))),
        "linear": (nn.Linear(12, 7, rng), rng.standard_normal((5, 12))),
        "batchnorm": (nn.BatchNorm(6), rng.standard_normal((5, 6)) * 2 + 1),
        "batchnorm-conv": (nn.BatchNorm(4), rng.standard_normal((3, 4, 9, 81))),
        "tanh": (nn.Tanh(), rng.standard_normal((4, 10))),
        "leaky_relu": (nn.LeakyReLU(0.1), rng.standard_normal((4, 10))),
    }


def actor_error(cfg: AgentConfig, rng, batch: int = 4, n_coords: int = 4) -> tuple[float, int]:
    actor = build_actor(cfg, rng)
    x = rng.uniform(-1, 1, (batch, cfg.features, cfg.history))
    return _layer_error(actor, x, rng, n_coords=n_coords)


def critic_error(cfg: AgentConfig, rng, batch: int = 4, n_coords: int = 4) -> tuple[float, int]:
    critic = Critic(cfg, rng)
    s = rng.uniform(-1, 1, (batch, cfg.features, cfg.history))
    a = rng.uniform(-1, 1, batch)
    R = rng.standard_normal(batch)
    critic.forward(s, a, train=True, update_stats=False)
    critic.zero_grad()
    da = critic.backward(R)
    # input gradient of the state is not needed in training, so only the
    # action and every parameter are checked

    def loss():
        return float(np.sum(critic.forward(s, a, train=True, update_stats=False) * R))

    pairs = [(a, da)] + [(p.value, p.grad) for p in critic.params()]
    return oracles.check_gradients(loss, pairs, rng, n_coords)


def gradcheck(draws: int = 20, seed: int = 0, tol: float = 1e-4,
              cfg: AgentConfig | None = None) -> SuiteResult:
    cfg = cfg or AgentConfig()
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    skipped = 0
    for d in range(draws):
        errs = {name: _layer_error(layer, x, rng) for name, (layer, x) in layer_cases(rng).items()}
        errs["actor"] = actor_error(cfg, rng)
        errs["critic"] = critic_error(cfg, rng)
        for k, (v, n_skip) in errs.items():
            skipped += n_skip
            worst[k] = max(worst.get(k, 0.0), v)
            if v > tol:
                return SuiteResult("gradcheck", False, f"{k}: rel. error {v:.2e} > {tol:g}",
                                   {"draw": d, "seed": seed, "layer": k})
    summary = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return SuiteResult("gradcheck", True,
                       f"{draws} draws; worst {summary}; {skipped} kink coords skipped")


SWEEP_TRACES = ("synth:zipf:400:3000:0.9:1", "synth:uniform:120:3000:2")
SWEEP_CAPACITIES = (16, 48)


def opt_dominance(seed: int = 0, traces=SWEEP_TRACES, capacities=SWEEP_CAPACITIES,
                  agent_cfg: AgentConfig | None = None) -> tuple[SuiteResult, list]:
    """Small sweep; OPT's hit rate must be at least every other policy's."""
    results = []
    for ref in traces:
        blocks = load_trace(ref)
        for cap in capacities:
            cell = {p: run(p, blocks, cap, seed, agent_cfg, trace=ref) for p in POLICIES}
            results.extend(cell.values())
            best = cell["opt"].hit_rate
            for p, r in cell.items():
                if r.hit_rate > best:
                    return (SuiteResult("opt-dominance", False,
                                        f"{p} {r.hit_rate:.4f} > opt {best:.4f} on {ref} cap {cap}",
                                        {"trace": ref, "capacity": cap, "policy": p, "seed": seed}),
                            results)
    return SuiteResult("opt-dominance", True,
                       f"{len(traces) * len(capacities)} cells x {len(POLICIES)} policies"), results


SUITES = ("opt-exhaustive", "lru-degeneracy", "feature-rescan", "gradcheck", "opt-dominance")


def run_all(quick: bool = False, seed: int = 0, only: list[str] | None = None) -> list[SuiteResult]:
    """Run the suites in order; ``quick`` shrinks case counts for a smoke run."""
    suites = {
        "opt-exhaustive": lambda: opt_exhaustive(500 if quick else 10_000, seed),
        "lru-degeneracy": lambda: lru_degeneracy(10 if quick else 100, seed=seed),
        "feature-rescan": lambda: feature_rescan(3 if quick else 20, 2000 if quick else 10_000, seed),
        "gradcheck": lambda: gradcheck(2 if quick else 20, seed),
        "opt-dominance": lambda: opt_dominance(seed)[0],
    }
    return [suites[name]() for name in SUITES if not only or name in only]


def format_table(results: list[SuiteResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'suite':<{width}}  result  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    return "\n".join(lines)


def failing_cases_json(results: list[SuiteResult]) -> str:
    return json.dumps({r.name: r.case for r in results if not r.passed})
