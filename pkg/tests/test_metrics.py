import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drrgossip.metrics import (
    CSV_HEADER, MetricsFormatError, PhaseCounts, RunMetrics, best_power_of_log, comparison_table,
    fit_growth, load_runs, read_csv, read_jsonl, summarize, write_csv,
)
from drrgossip.protocols import ProtocolConfig, drr_gossip_max


def run(msgs, rounds=5, protocol="p", n=16, run_id=0, correct=True):
    return RunMetrics(run_id=run_id, protocol=protocol, n=n, delta=0.0, seed=1,
                      phases={"GossipMax": PhaseCounts(rounds, msgs, msgs)}, correct=correct)


def test_summary_single_run():
    row = summarize([run(10)]).rows[0]
    assert (row.messages.mean, row.messages.std, row.trials) == (10, 0, 1)


def test_summary_mean():
    assert summarize([run(10), run(20, run_id=1)]).rows[0].messages.mean == 15


def test_summary_empty():
    with pytest.raises(ValueError):
        summarize([])


@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 500), st.sampled_from([16, 64]),
                          st.booleans()), min_size=1, max_size=30), st.randoms())
def test_summary_order_invariant(data, rnd):
    runs = [run(m, r, n=n, run_id=k, correct=c) for k, (m, r, n, c) in enumerate(data)]
    shuffled = runs[:]
    rnd.shuffle(shuffled)
    a, b = summarize(runs), summarize(shuffled)
    assert a == b
    assert summarize(runs) == a
    for row in a.rows:
        assert list(row.messages.quantiles) == sorted(row.messages.quantiles)
    assert sum(row.trials for row in a.rows) == len(runs)


def test_fit_exact():
    pts = [(2**k, 3 * k) for k in range(4, 10)]
    fit = fit_growth(pts, "log2 n")
    assert fit.slope == pytest.approx(3)
    assert fit.r2 == pytest.approx(1)


def test_fit_constant():
    fit = fit_growth([(16, 5), (64, 5), (256, 5)], "n")
    assert fit.slope == 0
    assert fit.r2 == 1


@pytest.mark.parametrize("pts,reg", [([(16, 1), (16, 2), (64, 3)], "n"), ([(2, 1), (4, 2), (8, 3)], "log2 log2 n"),
                                     ([(16, 1), (32, 2), (64, 3)], "cubic")])
def test_fit_errors(pts, reg):
    with pytest.raises(ValueError):
        fit_growth(pts, reg)


@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4), st.floats(0.1, 100))
def test_fit_scale_equivariant(ys, k):
    pts = [(2**(4 + i), y) for i, y in enumerate(ys)]
    if np.ptp(ys) < 1e-3:
        return
    a = fit_growth(pts, "n log2 n")
    b = fit_growth([(n, k * y) for n, y in pts], "n log2 n")
    assert b.slope == pytest.approx(k * a.slope, rel=1e-6, abs=1e-9)
    assert b.r2 == pytest.approx(a.r2, abs=1e-9)


def test_best_power_recovers_square():
    pts = [(2**b, 7 * b * b + 3) for b in (8, 10, 12, 14)]
    assert best_power_of_log(pts)[0] == 2.0


def test_comparison_single_and_identity():
    s = summarize([run(10, protocol="a")])
    rows = comparison_table(s)
    assert len(rows) == 1 and rows[0].messages_ratio == 1


def test_comparison_ratio():
    s = summarize([run(100, protocol="drr-gossip-ave"), run(300, protocol="uniform-push-sum")])
    by = {r.protocol: r for r in comparison_table(s)}
    assert by["uniform-push-sum"].messages_ratio == 3


def test_json_roundtrip_from_protocol():
    res = drr_gossip_max(ProtocolConfig(topology="complete:64", seed=1))
    rm = RunMetrics.from_result(3, res, delta=0.0, seed=1, keep_estimates=True)
    back = RunMetrics.from_json(rm.to_json())
    assert back == rm
    assert rm.msgs_sent == res.meters.total_sent
    assert rm.rounds == res.meters.total_rounds


def test_json_totals_checked():
    d = json.loads(run(10).to_json())
    d["totals"]["msgs_sent"] = 11
    line = json.dumps(d)
    with pytest.raises(MetricsFormatError):
        read_jsonl(io.StringIO(line), "x.jsonl")


def test_csv_roundtrip():
    runs = [run(10, run_id=0), run(20, run_id=1)]
    buf = io.StringIO()
    write_csv(runs, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = read_csv(io.StringIO(text))
    assert [r.msgs_sent for r in back] == [10, 20]


def test_corrupt_file_named(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text("{not json\n")
    with pytest.raises(MetricsFormatError) as info:
        load_runs(p)
    assert "bad.jsonl" in str(info.value)
    with pytest.raises(MetricsFormatError):
        load_runs(tmp_path / "missing.jsonl")


def test_summary_ratios():
    row = summarize([run(16 * 4 * 2, rounds=8, n=16)]).rows[0]
    assert row.ratios["msgs_per_n_loglog"] == pytest.approx(4)
    assert row.ratios["rounds_per_log"] == pytest.approx(2)
    assert row.ratios["rounds_per_log2"] == pytest.approx(0.5)
