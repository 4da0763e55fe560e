"""Explore whether the box criterion and the L2 grasp criterion agree.

For beliefs of shrinking spread around a fixed gripper pose, print the
probability of a tolerance box around the gripper pose next to the squared
L2 distance between gripper and belief. If some threshold G separates the
beliefs that pass the box test from those that fail, the two criteria are
coherent on this family. This is an exploration, not a tested invariant.

Usage: python scripts/grasp_coherence.py [--n 20000] [--seed 0]
"""

import argparse

import numpy as np

from mopg import Mixture, ProjectedGaussian, TangentSpace
from mopg.pipeline import box_probability
from mopg.mixture import l2_distance_sq


def belief(scale, offset):
    cov = np.diag([0.02, 0.02, 0.02, 0.05, 0.05, 0.05]) * scale**2
    return Mixture.single(ProjectedGaussian(TangentSpace.identity(), np.r_[0, 0, 0, offset, 0, 0], cov))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=20000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    gripper = belief(0.1, 0.0)
    box = np.array([[-0.05, 0.05]] * 3 + [[-0.1, 0.1]] * 3)
    eps = 0.05
    rows = []
    for scale in (1.0, 0.5, 0.25, 0.1, 0.05):
        for offset in (0.0, 0.03, 0.2):
            b = belief(scale, offset)
            p = box_probability(b, box, args.n, args.seed, TangentSpace.identity())
            d = l2_distance_sq(gripper, b, args.n, args.seed)
            rows.append((scale, offset, p.value, d.value))
    print(f"{'scale':>6} {'offset':>7} {'P(box)':>8} {'L2^2':>12}  box test (P > 1-eps, eps={eps})")
    for scale, offset, p, d in rows:
        print(f"{scale:6.2f} {offset:7.2f} {p:8.4f} {d:12.4g}  {'pass' if p > 1 - eps else 'fail'}")
    passing = [d for _, _, p, d in rows if p > 1 - eps]
    failing = [d for _, _, p, d in rows if p <= 1 - eps]
    if passing and failing and max(passing) < min(failing):
        print(f"coherent: any G in [{max(passing):.4g}, {min(failing):.4g}) separates the two groups")
    else:
        print("no single threshold G separates passing from failing beliefs on this family")


if __name__ == "__main__":
    main()
