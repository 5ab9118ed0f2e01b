"""Exit criteria 1-11, each at its stated tolerance and runtime limit.

Every test prints one PASS/FAIL line; the lines are repeated in the terminal
summary. Thresholds marked as oracle values were computed independently
(exact fraction arithmetic) and frozen here.
"""
import math
import time

import numpy as np
import pytest

from drrgossip.aggregation import convergecast_max, convergecast_sum
from drrgossip.cli import main
from drrgossip.drr import NO_PARENT, Forest, forest_stats, run_drr, run_local_drr, validate_forest
from drrgossip.gossip import track_push_sum_potential
from drrgossip.metrics import best_power_of_log, fit_growth
from drrgossip.protocols import ProtocolConfig, drr_gossip_ave, drr_gossip_max, run_protocol
from drrgossip.seeding import trial_seed
from drrgossip.topology import build_chord, build_d_regular
from drrgossip.transport import NetworkSim

pytestmark = pytest.mark.acceptance

RESULTS: list[str] = []

# sum_{i=1}^{n} (i/n)^(ceil(log2 n) - 1), exact rational arithmetic
TREE_COUNT_ORACLE = {256: 32.50227862844872, 1024: 102.90073242122307, 4096: 341.83355712888624}


def verdict(capsys, number, ok, detail, started, limit):
    elapsed = time.perf_counter() - started
    ok = bool(ok) and elapsed <= limit
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}  ({elapsed:.1f}s / {limit}s)"
    RESULTS.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_c01_forest_structure(capsys):
    t0 = time.perf_counter()
    parts, ok = [], True
    for n in (256, 1024, 4096):
        counts, small, valid = [], 0, 0
        for k in range(200):
            f = run_drr(NetworkSim(n), n, np.random.default_rng(trial_seed(n, k)))
            valid += not validate_forest(f)
            counts.append(f.m)
            small += forest_stats(f).max_size <= 12 * math.log2(n)
        mean = float(np.mean(counts))
        a = valid == 200
        b = abs(mean - TREE_COUNT_ORACLE[n]) <= 0.10 * TREE_COUNT_ORACLE[n]
        c = small >= 198
        ok &= a and b and c
        tag = lambda x: "ok" if x else "FAIL"
        parts.append(f"n={n}: (a) valid {valid}/200 {tag(a)}, (b) mean trees {mean:.1f} vs "
                     f"{TREE_COUNT_ORACLE[n]:.1f} {tag(b)}, (c) size <= 12 log2 n {small}/200 {tag(c)}")
    verdict(capsys, 1, ok, "; ".join(parts), t0, 60)


def test_c02_local_drr_root_count(capsys):
    t0 = time.perf_counter()
    counts = []
    for k in range(200):
        g = build_d_regular(1024, 8, trial_seed(2, k))
        f = run_local_drr(NetworkSim(1024), g, np.random.default_rng(trial_seed(3, k)))
        counts.append(f.m)
    mean = float(np.mean(counts))
    target = 1024 / 9
    verdict(capsys, 2, abs(mean - target) <= 0.05 * target,
            f"mean roots {mean:.2f} vs {target:.2f}", t0, 20)


def test_c03_local_drr_height(capsys):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("chord:10", "dregular:1024,8"):
        good = 0
        for k in range(200):
            g = build_chord(10) if name == "chord:10" else build_d_regular(1024, 8, trial_seed(4, k))
            f = run_local_drr(NetworkSim(g.n), g, np.random.default_rng(trial_seed(5, k)))
            good += forest_stats(f).max_height <= 3 * math.log2(g.n)
        ok &= good >= 198
        parts.append(f"{name}: {good}/200 within height 30")
    verdict(capsys, 3, ok, "; ".join(parts), t0, 30)


def random_forest(rng, n):
    parent = np.full(n, NO_PARENT)
    for i in range(n - 1):
        if rng.random() < 0.7:
            parent[i] = rng.integers(i + 1, n)
    return Forest.from_parents((np.arange(n) + 1) / (n + 1), parent)


def test_c04_convergecast_exact(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(44)
    bad = 0
    for k in range(500):
        n = int(rng.integers(1, 65))
        f = random_forest(rng, n)
        vals = rng.integers(-1000, 1000, size=n)
        delta = 0.2 if k % 2 else 0.0
        sim = NetworkSim(n, delta, seed=k)
        mx = convergecast_max(sim, f, vals)
        sm = convergecast_sum(sim, f, vals)
        for j, r in enumerate(f.roots.tolist()):
            members = vals[f.root_of == r]
            bad += (mx.local_max[j] != members.max() or sm.local_sum[j] != members.sum()
                    or sm.tree_size[j] != members.size)
        bad += sm.local_sum.sum() != vals.sum() or sm.tree_size.sum() != n
    verdict(capsys, 4, bad == 0, f"{bad} mismatches over 500 forests (half at delta=0.2)", t0, 10)


def test_c05_push_sum_conservation(capsys):
    t0 = time.perf_counter()
    worst_s = worst_g = 0.0
    for k in range(100):
        r = drr_gossip_ave(ProtocolConfig(topology="complete:256", seed=trial_seed(5, k)))
        s0 = r.diagnostics["value_sum"]
        for _, s, g, _ in r.diagnostics["ave_totals"]:
            worst_s = max(worst_s, abs(s - s0) / abs(s0))
            worst_g = max(worst_g, abs(g - 256) / 256)
    verdict(capsys, 5, worst_s <= 1e-9 and worst_g <= 1e-9,
            f"max drift s {worst_s:.2e}, g {worst_g:.2e}", t0, 20)


def test_c06_gossip_max_consensus(capsys):
    t0 = time.perf_counter()
    rates = {}
    for delta in (0.0, 0.05):
        hits = 0
        for k in range(200):
            r = drr_gossip_max(ProtocolConfig(topology="complete:1024", delta=delta, seed=trial_seed(6, k)))
            hits += r.diagnostics["roots_with_max"] == r.diagnostics["roots"]
        rates[delta] = hits / 200
    verdict(capsys, 6, rates[0.0] >= 0.99 and rates[0.05] >= 0.95,
            f"all roots hold max: {rates[0.0]:.3f} at delta=0, {rates[0.05]:.3f} at delta=0.05", t0, 60)


def test_c07_gossip_ave_accuracy(capsys):
    t0 = time.perf_counter()
    root_ok = node_ok = 0
    for k in range(200):
        r = drr_gossip_ave(ProtocolConfig(topology="complete:1024", seed=trial_seed(7, k)))
        root_ok += r.diagnostics["largest_root_error"] <= 2 / 1023
        node_ok += r.max_rel_error <= 1e-2
    verdict(capsys, 7, root_ok >= 190 and node_ok >= 190,
            f"largest root within 2/(n-1): {root_ok}/200; all nodes within 1e-2: {node_ok}/200", t0, 90)


def test_c08_potential_contraction(capsys):
    t0 = time.perf_counter()
    m = 64
    rounds = math.ceil(math.log2(m) + 2 * math.log2(m * 16))
    tr = track_push_sum_potential(m, np.full(m, 16), 0.0, 1000, rounds, rng=np.random.default_rng(8))
    worst = float(tr.mean_ratio.max())
    verdict(capsys, 8, tr.phi0 == m - 1 and worst <= 0.55,
            f"phi0 {tr.phi0}, worst mean ratio {worst:.4f} over {rounds} rounds", t0, 60)


def test_c09_complexity_separation(capsys):
    t0 = time.perf_counter()
    ns = [2**8, 2**10, 2**12, 2**14]
    rounds, msgs, base = {}, {}, {}
    for n in ns:
        r_, m_, b_ = [], [], []
        for k in range(50):
            cfg = ProtocolConfig(topology=f"complete:{n}", seed=trial_seed(9, k))
            res = drr_gossip_ave(cfg)
            r_.append(res.meters.total_rounds)
            m_.append(res.meters.total_sent)
            b_.append(run_protocol("uniform-push-sum", cfg).meters.total_sent)
        rounds[n], msgs[n], base[n] = np.mean(r_), np.mean(m_), np.mean(b_)
    per_log = [rounds[n] / math.log2(n) for n in ns]
    band = max(per_log) / min(per_log)
    pts = [(n, msgs[n]) for n in ns]
    r2_ll = fit_growth(pts, "n log2 log2 n").r2
    r2_l = fit_growth(pts, "n log2 n").r2
    ratio = [base[n] / msgs[n] for n in ns]
    increasing = all(b > a for a, b in zip(ratio, ratio[1:]))
    verdict(capsys, 9, band <= 2 and r2_ll > r2_l and increasing,
            f"rounds/log2 n band {band:.3f}; r2 n loglog {r2_ll:.6f} vs n log {r2_l:.6f}; "
            f"baseline/DRR {', '.join(f'{x:.3f}' for x in ratio)}", t0, 600)


def test_c10_chord_scaling(capsys):
    t0 = time.perf_counter()
    pts = []
    for b in (8, 10, 12):
        for k in range(50):
            r = drr_gossip_ave(ProtocolConfig(topology=f"chord:{b}", seed=trial_seed(10, k)))
            pts.append((2**b, r.meters.total_rounds))
    e, _ = best_power_of_log(pts)
    verdict(capsys, 10, 1.5 <= e <= 2.5, f"best-fit exponent of log2 n: {e:.2f}", t0, 300)


def test_c11_determinism(tmp_path, capsys):
    t0 = time.perf_counter()
    args = ["run", "--protocol", "drr-gossip-ave", "--topology", "complete:512", "--delta", "0.05",
            "--trials", "3", "--seed", "11", "--no-timestamp"]
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    codes = (main(args + ["--out", str(a)]), main(args + ["--out", str(b)]))
    same = codes == (0, 0) and a.read_bytes() == b.read_bytes()
    verdict(capsys, 11, same, f"byte-identical output: {same}", t0, 5)
