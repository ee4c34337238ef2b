"""Learned-policy hit rate across discount factors on one trace.

Writes results.csv / curves.csv / summary.csv under --out, like ``cachesim sweep``.
"""
import argparse

from cachesim import sim


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trace", default="synth:zipf:2000:30000:0.9:0")
    ap.add_argument("--capacities", default="64,256")
    ap.add_argument("--gammas", default="0.5,0.8,0.9,0.95,0.99")
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/gamma_sweep")
    args = ap.parse_args()
    spec = sim.SweepSpec(traces=[args.trace], policies=["lru", "opt", "phoebe"],
                         capacities=args.capacities.split(","),
                         gammas=[float(g) for g in args.gammas.split(",")],
                         seeds=[int(s) for s in args.seeds.split(",")],
                         out_dir=args.out, workers=args.workers)
    _, rows = sim.sweep(spec)
    for r in rows:
        print(f"cap={r['capacity_blocks']:<6} {r['policy']:<12} hit={1 - r['miss_rate']:.4f}")


if __name__ == "__main__":
    main()
