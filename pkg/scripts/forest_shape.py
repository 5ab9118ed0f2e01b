"""Tree count and largest tree size of DRR forests, with the exact expected tree count."""
import argparse
import math
from fractions import Fraction

import numpy as np

from drrgossip.drr import forest_stats, run_drr
from drrgossip.transport import NetworkSim


def expected_trees(n):
    k = math.ceil(math.log2(n)) - 1
    return float(sum(Fraction(i, n) ** k for i in range(1, n + 1)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bits", default="8,10,12")
    ap.add_argument("--trials", type=int, default=200)
    args = ap.parse_args()
    print("n,mean_trees,expected_trees,max_size_p50,max_size_p99,frac_within_12log2n")
    for b in (int(x) for x in args.bits.split(",")):
        n = 1 << b
        stats = [forest_stats(run_drr(NetworkSim(n), n, np.random.default_rng([b, k])))
                 for k in range(args.trials)]
        sizes = np.array([s.max_size for s in stats])
        print(f"{n},{np.mean([s.tree_count for s in stats]):.2f},{expected_trees(n):.2f},"
              f"{np.percentile(sizes, 50):.0f},{np.percentile(sizes, 99):.0f},"
              f"{np.mean(sizes <= 12 * b):.4f}")


if __name__ == "__main__":
    main()
