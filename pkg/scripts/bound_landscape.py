#!/usr/bin/env python3
"""Where does the rounding error sit between the defect and 9x the defect?

Two probes:
1. The two-coordinate optimality family, where the error equals the defect
   exactly (ratio 1), showing the linear lower edge of the bound.
2. Rotated almost-commuting PVM pairs across angles, where the repair error
   tracks 2 sin^2(theta) against the commutation defect sin^2(2 theta).
"""

import math

from povmround import orthogonalize, repair
from povmround.generators import linfty2_family, rotated_pvm_pair


def optimality_family():
    print("optimality family (error/defect = 1 exactly):")
    print(f"{'c':>6} {'defect':>12} {'error':>12} {'ratio':>8}")
    for c in (0.01, 0.05, 0.1, 0.25, 0.5, 0.9):
        alg, phi, a = linfty2_family(c)
        rep = orthogonalize(alg, phi, a)
        print(f"{c:6.2f} {rep.defect:12.6f} {rep.error:12.6f} {rep.ratio:8.4f}")


def rotation_profile():
    print("\nrotated PVM pairs (repair error vs 10x commutation defect):")
    print(f"{'theta':>6} {'eps_c':>12} {'error':>12} {'error/eps_c':>12} {'2sin^2':>10}")
    for theta in (0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7):
        alg, phi, p, q = rotated_pvm_pair(theta, (2,), canonical=True)
        rep = repair(phi, p, q)
        print(f"{theta:6.2f} {rep.epsilon_c:12.6f} {rep.error:12.6f} "
              f"{rep.error / rep.epsilon_c:12.4f} {2 * math.sin(theta) ** 2:10.6f}")


if __name__ == "__main__":
    optimality_family()
    rotation_profile()
