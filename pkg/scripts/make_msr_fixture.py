"""Regenerate tests/data/msr_fixture.csv, a 1,000-line MSR-format trace.

Requests mix a small hot set of extents (so blocks are reused) with cold
random extents. Offsets are sector aligned but often not block aligned, and
a few requests have size zero.
"""
import argparse
from pathlib import Path

import numpy as np

SECTOR = 512


def make_lines(n_lines: int = 1000, seed: int = 2024) -> list[str]:
    rng = np.random.default_rng(seed)
    hot = rng.integers(0, 1 << 21, size=60) * SECTOR  # within the first 1 GiB
    sizes_kb = np.array([0.5, 4, 8, 16, 64, 128, 256])
    probs = np.array([0.03, 0.12, 0.1, 0.15, 0.2, 0.2, 0.2])
    ts = 128166372000000000
    lines = []
    for i in range(n_lines):
        ts += int(rng.integers(1_000, 50_000))
        if rng.random() < 0.7:
            offset = int(rng.choice(hot)) + int(rng.integers(0, 16)) * SECTOR
        else:
            offset = int(rng.integers(0, 1 << 23)) * SECTOR
        size = 0 if rng.random() < 0.01 else int(rng.choice(sizes_kb, p=probs) * 1024)
        kind = "Read" if rng.random() < 0.6 else "Write"
        lines.append(f"{ts},fixture,0,{kind},{offset},{size},{int(rng.integers(50, 5000))}")
    return lines


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests/data/msr_fixture.csv"))
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    Path(args.out).write_text("\n".join(make_lines(seed=args.seed)) + "\n", encoding="utf-8")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
