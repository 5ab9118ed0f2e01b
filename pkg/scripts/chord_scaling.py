"""DRR-gossip-ave on full Chord rings: rounds against (log2 n)^e."""
import argparse

import numpy as np

from drrgossip.metrics import best_power_of_log
from drrgossip.protocols import ProtocolConfig, drr_gossip_ave
from drrgossip.seeding import trial_seed


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bits", default="8,10,12")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    pts = []
    print("bits,n,rounds_mean,msgs_mean,correct_rate")
    for b in (int(x) for x in args.bits.split(",")):
        res = [drr_gossip_ave(ProtocolConfig(topology=f"chord:{b}", seed=trial_seed(args.seed, k)))
               for k in range(args.trials)]
        rounds = [r.meters.total_rounds for r in res]
        pts += [(1 << b, x) for x in rounds]
        print(f"{b},{1 << b},{np.mean(rounds):.1f},{np.mean([r.meters.total_sent for r in res]):.1f},"
              f"{np.mean([r.correct for r in res]):.3f}")
    e, _ = best_power_of_log(pts)
    print(f"best exponent e in rounds ~ (log2 n)^e: {e:.2f}")


if __name__ == "__main__":
    main()
