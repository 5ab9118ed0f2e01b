"""Rounds and messages of DRR-gossip-ave against uniform push-sum over n = 2^8 .. 2^14.

Writes a per-(protocol, n) summary CSV and prints the growth fits.
"""
import argparse
import sys

from drrgossip.metrics import RunMetrics, comparison_table, fit_growth, summarize
from drrgossip.protocols import ProtocolConfig, run_protocol
from drrgossip.seeding import trial_seed


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bits", default="8,10,12,14")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--delta", type=float, default=0.0)
    ap.add_argument("--out", default="complexity_summary.csv")
    args = ap.parse_args()

    runs = []
    for b in (int(x) for x in args.bits.split(",")):
        n = 1 << b
        for k in range(args.trials):
            s = trial_seed(args.seed, k)
            cfg = ProtocolConfig(topology=f"complete:{n}", delta=args.delta, seed=s)
            for name in ("drr-gossip-ave", "uniform-push-sum"):
                runs.append(RunMetrics.from_result(k, run_protocol(name, cfg), delta=args.delta, seed=s))
        print(f"n={n} done", file=sys.stderr)
    summary = summarize(runs)
    with open(args.out, "w") as fh:
        fh.write(summary.to_csv())
    for row in comparison_table(summary, reference="drr-gossip-ave"):
        print(row.csv_row())
    pts = [(r.n, r.messages.mean) for r in summary.rows if r.protocol == "drr-gossip-ave"]
    if len(pts) >= 3:
        for reg in ("n", "n log2 log2 n", "n log2 n"):
            print(f"messages ~ {reg}: r2 = {fit_growth(pts, reg).r2:.6f}")


if __name__ == "__main__":
    main()
