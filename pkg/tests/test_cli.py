import json

import pytest

from drrgossip.cli import ExperimentSpec, SpecError, main, topology_for_n


def lines(path):
    return path.read_text().splitlines()


def test_run_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    args = ["run", "--protocol", "drr-only", "--topology", "complete:16", "--trials", "1", "--seed", "1",
            "--no-timestamp"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(lines(a)) == 2


def test_timestamp_only_in_header(tmp_path):
    p = tmp_path / "a.jsonl"
    main(["run", "--protocol", "drr-only", "--topology", "complete:16", "--out", str(p)])
    head = json.loads(lines(p)[0])["header"]
    assert head["timestamp"] is not None


def test_missing_topology_is_usage_error(capsys):
    assert main(["run", "--protocol", "drr-only"]) == 2
    assert "topology" in capsys.readouterr().err


def test_bad_flag_is_usage_error():
    assert main(["run", "--protocol", "nope", "--topology", "complete:4"]) == 2


def test_hundred_trials(tmp_path):
    p = tmp_path / "r.jsonl"
    main(["run", "--protocol", "drr-only", "--topology", "complete:32", "--trials", "100", "--out", str(p)])
    recs = [json.loads(x) for x in lines(p)[1:]]
    assert [r["run_id"] for r in recs] == list(range(100))


def test_jobs_do_not_change_output(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    base = ["run", "--protocol", "drr-gossip-max", "--topology", "complete:128", "--trials", "4",
            "--no-timestamp"]
    main(base + ["--out", str(a)])
    main(base + ["--jobs", "2", "--out", str(b)])
    assert lines(a)[1:] == lines(b)[1:]


def test_csv_output(tmp_path):
    p = tmp_path / "r.csv"
    main(["run", "--protocol", "drr-only", "--topology", "complete:16", "--out", str(p), "--no-timestamp"])
    text = lines(p)
    assert text[0] == "# timestamp=None"
    assert text[1] == "run_id,protocol,n,delta,seed,phase,rounds,msgs_sent,msgs_delivered"


def test_config_file_flags_win(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("protocol = drr-only\ntopology = complete:16\ntrials = 3\n# comment\nbudget-ave-rounds = 4\n")
    p = tmp_path / "r.jsonl"
    assert main(["run", "--config", str(cfg), "--trials", "2", "--out", str(p)]) == 0
    assert len(lines(p)) == 3


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["run", "--config", str(cfg)]) == 2


def test_sweep_rows_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["sweep", "--protocol", "drr-gossip-max", "--topology", "complete:0", "--n-list", "256,1024",
            "--trials", "2"]
    assert main(base + ["--summary", str(a)]) == 0
    main(base + ["--summary", str(b)])
    assert a.read_bytes() == b.read_bytes()
    rows = lines(a)
    assert len(rows) == 3 and rows[1].startswith("drr-gossip-max,256,2,")


def test_sweep_empty_n_list():
    assert main(["sweep", "--protocol", "drr-only", "--topology", "complete:4", "--n-list", ""]) == 2


def test_topology_for_n():
    assert topology_for_n("chord:3", 1024) == "chord:10"
    assert topology_for_n("dregular:10,6", 64) == "dregular:64,6"
    with pytest.raises(SpecError):
        topology_for_n("chord:3", 1000)


def test_validate_default_ok(capsys):
    assert main(["validate"]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_detects_forced_drop(capsys):
    assert main(["validate", "--inject-drop", "Convergecast"]) == 1
    assert "delta=0" in capsys.readouterr().err


def test_validate_chord3_local():
    assert main(["validate", "--topology", "chord:3", "--trials", "3"]) == 0


def test_report_single_and_pair(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["run", "--protocol", "drr-gossip-ave", "--topology", "complete:256", "--trials", "2", "--out", str(a)])
    assert main(["report", str(a)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "protocol,n,rounds_mean,msgs_mean,rounds_ratio,msgs_ratio"
    assert len(out) == 2
    main(["run", "--protocol", "uniform-push-sum", "--topology", "complete:256", "--trials", "2", "--out", str(b)])
    csv_out = tmp_path / "cmp.csv"
    assert main(["report", str(a), str(b), "--out", str(csv_out)]) == 0
    rows = lines(csv_out)
    assert len(rows) == 3 and "msgs_ratio" in rows[0]


def test_report_corrupt_file(tmp_path, capsys):
    p = tmp_path / "broken.jsonl"
    p.write_text("garbage\n")
    assert main(["report", str(p)]) == 2
    assert "broken.jsonl" in capsys.readouterr().err


def test_spec_validation():
    with pytest.raises(SpecError):
        ExperimentSpec(protocol="drr-only", topology="complete:4", trials=0).validate()
    ExperimentSpec(protocol="drr-only", topology="complete:4").validate()
