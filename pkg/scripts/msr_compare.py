"""All policies on an MSR Cambridge trace (or the bundled fixture) at a few cache sizes."""
import argparse
from pathlib import Path

from cachesim import sim

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "data" / "msr_fixture.csv"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trace", default=str(FIXTURE))
    ap.add_argument("--capacities", default="1MB,4MB,16MB")
    ap.add_argument("--limit", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/msr_compare")
    args = ap.parse_args()
    spec = sim.SweepSpec(traces=[args.trace], policies=list(sim.POLICIES),
                         capacities=args.capacities.split(","), seeds=[args.seed],
                         out_dir=args.out, limit=args.limit, workers=args.workers)
    _, rows = sim.sweep(spec)
    for r in rows:
        rel = r.get("rel_miss_lru")
        print(f"cap={r['capacity_blocks']:<6} {r['policy']:<8} miss={r['miss_rate']:.4f} "
              f"rel_vs_lru={'-' if rel is None else format(rel, '.3f')}")


if __name__ == "__main__":
    main()
