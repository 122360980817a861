#!/usr/bin/env python3
"""Batch rounding experiment: error/defect statistics over seeded instances.

Usage: python scripts/sweep_demo.py [count] [csv_path]

Generates `count` random near-projective POVMs with random states, rounds
each one, and prints the distribution of the error/defect ratio against the
certified ceiling of 9.
"""

import sys

import numpy as np

from povmround import orthogonalize
from povmround.generators import gen_instance


def main(count=200, csv_path=None):
    rows = []
    for seed in range(count):
        rng = np.random.default_rng(seed)
        dims = [int(d) for d in rng.integers(1, 7, size=rng.integers(1, 3))]
        n = int(rng.integers(2, 6))
        delta = float(rng.uniform(0.01, 0.45))
        inst = gen_instance("random_povm_near_pvm", seed, {"dims": dims, "n": n, "delta": delta})
        rep = orthogonalize(inst.algebra, inst.state, inst.povm)
        rows.append((seed, "+".join(map(str, dims)), n, rep.defect, rep.error, rep.ratio))

    ratios = np.array([r[5] for r in rows if np.isfinite(r[5])])
    print(f"instances: {len(rows)}")
    print(f"ratio error/defect: mean {ratios.mean():.4f}  median {np.median(ratios):.4f}  "
          f"max {ratios.max():.4f}  (certified ceiling 9)")
    worst = max(rows, key=lambda r: r[5] if np.isfinite(r[5]) else -1)
    print(f"worst instance: seed {worst[0]} dims {worst[1]} n {worst[2]} "
          f"defect {worst[3]:.5f} error {worst[4]:.5f}")

    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write("seed,dims,n,defect,error,ratio\n")
            for r in rows:
                fh.write(",".join(str(x) for x in r) + "\n")
        print(f"wrote {csv_path}")


if __name__ == "__main__":
    count = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    csv_path = sys.argv[2] if len(sys.argv) > 2 else None
    main(count, csv_path)
