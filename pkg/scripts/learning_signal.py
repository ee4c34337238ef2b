"""Learned policy vs LRU on a loop one block larger than the cache.

LRU gets zero hits on this workload; the script reports the learned
policy's hit rate over the final 10,000 accesses for each seed.
"""
import argparse
import time

from cachesim import sim
from cachesim.agent import AgentConfig

TRACE = "synth:cyclic:20:50000"
CAPACITY = 19
TAIL = 10_000


def tail_rate(seed: int, cfg: AgentConfig) -> tuple[float, float, int]:
    blocks = sim.load_trace(TRACE)
    t0 = time.perf_counter()
    res = sim.run("phoebe", blocks, CAPACITY, seed=seed, agent_cfg=cfg, keep_flags=True)
    return float(res.hit_flags[-TAIL:].mean()), time.perf_counter() - t0, res.bypasses


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--gamma", type=float, default=0.95)
    args = ap.parse_args()
    cfg = AgentConfig(gamma=args.gamma)
    lru = sim.run("lru", sim.load_trace(TRACE), CAPACITY, keep_flags=True)
    lru_tail = float(lru.hit_flags[-TAIL:].mean())
    print(f"lru final-{TAIL} hit rate {lru_tail:.3f}")
    for seed in (int(s) for s in args.seeds.split(",")):
        rate, secs, byp = tail_rate(seed, cfg)
        print(f"seed {seed}: phoebe final-{TAIL} hit rate {rate:.3f} "
              f"(+{100 * (rate - lru_tail):.1f} pp, {byp} bypasses, {secs:.0f} s)", flush=True)


if __name__ == "__main__":
    main()
