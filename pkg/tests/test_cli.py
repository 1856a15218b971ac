from spikesim.cli import main


def gen_workload(tmp_path, seed=3, procs=2, n=12, horizon=40):
    prefix = str(tmp_path / "w")
    assert main(["gen", "--seed", str(seed), "--procs", str(procs),
                 "--n", str(n), "--prob", "0.15",
                 "--horizon", str(horizon), "--out", prefix]) == 0
    return prefix


def test_run_oracle_compare_pipeline(tmp_path, capsys):
    prefix = gen_workload(tmp_path)
    run_trace = str(tmp_path / "run.trace")
    oracle_trace = str(tmp_path / "oracle.trace")
    stats = str(tmp_path / "stats.json")
    assert main(["run", "--net", prefix + ".net", "--map", prefix + ".map",
                 "--stim", prefix + ".stim", "--horizon", "40",
                 "--out", run_trace, "--stats", stats]) == 0
    assert main(["oracle", "--net", prefix + ".net", "--stim",
                 prefix + ".stim", "--horizon", "40",
                 "--out", oracle_trace]) == 0
    assert main(["compare", run_trace, oracle_trace]) == 0
    out = capsys.readouterr().out
    assert "traces identical" in out
    import json
    with open(stats) as fh:
        recorded = json.load(fh)
    assert recorded["advancements"] > 40


def test_compare_detects_difference(tmp_path, capsys):
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.write_text("spike 1 1\n")
    b.write_text("spike 1 1\nspike 2 5\n")
    assert main(["compare", str(a), str(b)]) == 1
    assert "only in b" in capsys.readouterr().out


def test_missing_file_is_usage_error(tmp_path, capsys):
    assert main(["compare", str(tmp_path / "nope"), str(tmp_path / "nope")]) == 2
    assert "error:" in capsys.readouterr().err


def test_invalid_network_is_usage_error(tmp_path, capsys):
    net = tmp_path / "bad.net"
    net.write_text("neuron 1 theta 1.0 tau 10\nsynapse 1 2 0.5 1\n")
    mapping = tmp_path / "bad.map"
    mapping.write_text("procs 1\nassign 1 1\n")
    stim = tmp_path / "bad.stim"
    stim.write_text("")
    assert main(["run", "--net", str(net), "--map", str(mapping),
                 "--stim", str(stim), "--horizon", "10"]) == 2
    assert "unknown endpoint" in capsys.readouterr().err


def test_threads_mode_runs(tmp_path):
    prefix = gen_workload(tmp_path, horizon=20)
    assert main(["run", "--net", prefix + ".net", "--map", prefix + ".map",
                 "--stim", prefix + ".stim", "--horizon", "20",
                 "--mode", "threads", "--timeout-ms", "5"]) == 0


def test_suite_subcommand(capsys):
    assert main(["suite", "--seeds", "2", "--procs", "1,2", "--n", "12",
                 "--horizon", "50"]) == 0
    assert "cells passed" in capsys.readouterr().out


def test_tcp_mode_requires_roster(tmp_path, capsys):
    prefix = gen_workload(tmp_path, horizon=10)
    assert main(["run", "--net", prefix + ".net", "--map", prefix + ".map",
                 "--stim", prefix + ".stim", "--horizon", "10",
                 "--mode", "tcp"]) == 2
    assert "roster" in capsys.readouterr().err
