"""Per-round mean contraction of the push-sum potential among m roots.

Prints the empirical ratio next to the exact lossless factor 1/2 - sum(P^2)/4.
"""
import argparse

import numpy as np

from drrgossip.gossip import contraction_factor, track_push_sum_potential


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=64)
    ap.add_argument("--size", type=int, default=16, help="nodes per tree")
    ap.add_argument("--delta", type=float, default=0.0)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--rounds", type=int, default=26)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sizes = np.full(args.m, args.size)
    tr = track_push_sum_potential(args.m, sizes, args.delta, args.trials, args.rounds,
                                  rng=np.random.default_rng(args.seed))
    exact = contraction_factor(sizes / sizes.sum())
    print(f"phi0={tr.phi0}  exact lossless factor={exact:.5f}")
    print("round,mean_ratio,mean_phi")
    for t, (r, phi) in enumerate(zip(tr.mean_ratio, tr.mean_phi[1:]), start=1):
        print(f"{t},{r:.5f},{phi:.6g}")


if __name__ == "__main__":
    main()
