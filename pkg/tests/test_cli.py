import json

import pytest

from contactlab.cli import load_config, main


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def config_line(line):
    assert line.startswith("# config: ")
    return json.loads(line[len("# config: "):])


def test_bounds_prints_value(capsys):
    assert main(["bounds", "--lemma", "exit", "--a", "20", "--b", "10", "--lambda", "2"]) == 0
    meta_line, value = capsys.readouterr().out.splitlines()
    assert float(value) == pytest.approx(9.766e-4, rel=1e-3)
    assert config_line(meta_line) == {"command": "bounds", "lemma": "exit", "a": 20, "b": 10, "lambda": 2.0}


def test_bounds_report_as_json(capsys):
    assert main(["bounds", "--lemma", "ignite", "--k", "1000000", "--lambda", "1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["values"]["reach_l_failure"] == pytest.approx(0.01)
    assert report["vacuous"] is False
    assert report["config"] == {"command": "bounds", "lemma": "ignite", "k": 1000000.0, "lambda": 1.0}


def test_gen_star_zero_is_usage_error(capsys):
    assert main(["gen", "--graph", "star", "--k", "0"]) == 1
    assert error_of(capsys)["error"] == "UsageError"


def test_unknown_flag_is_usage_error(capsys):
    assert main(["gen", "--graph", "star", "--k", "3", "--colour", "red"]) == 1
    assert error_of(capsys)["error"] == "UsageError"


def test_precondition_failure_exits_two(capsys):
    assert main(["bounds", "--lemma", "life", "--k", "600", "--lambda", "2.5", "--epsilon", "0.5"]) == 2
    assert error_of(capsys)["error"] == "InvalidParameterError"


def test_gen_writes_edge_list(capsys):
    assert main(["gen", "--graph", "star_chain", "--k", "2", "--r", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# vertices=4"
    meta = config_line(lines[1])
    assert (meta["command"], meta["graph"], meta["k"], meta["r"]) == ("gen", "star_chain", 2, 1)
    assert len(lines) == 5


def test_eig_from_edge_list(tmp_path, capsys):
    path = tmp_path / "star.txt"
    assert main(["gen", "--graph", "star", "--k", "100", "--out", str(path)]) == 0
    assert main(["eig", "--input", str(path), "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    (record,) = payload["rows"]
    assert record["Lambda"] == pytest.approx(10.0, abs=1e-6)
    assert payload["config"] == {"command": "eig", "input": str(path), "budget": 10000, "tol": 1e-10}
    assert record["max_degree"] == 100.0


def test_simulate_replicas_as_json(capsys):
    argv = ["simulate", "--graph", "star", "--k", "3", "--lambda", "1", "--init", "all", "--replicas", "5",
            "--seed", "3", "--format", "json"]
    assert main(argv) == 0
    first = json.loads(capsys.readouterr().out)
    assert [row["replica"] for row in first["rows"]] == list(range(5))
    assert first["config"]["seed"] == 3
    assert first["config"]["lambda"] == 1.0
    assert first["config"]["replicas"] == 5
    assert main(argv) == 0
    assert json.loads(capsys.readouterr().out) == first


def test_simulate_trajectory(capsys):
    argv = ["simulate", "--star", "--k", "5", "--i", "5", "--lambda", "1", "--horizon", "3", "--sample-dt", "1",
            "--seed", "2"]
    assert main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    meta = config_line(lines[0])
    assert (meta["star"], meta["k"], meta["i"], meta["seed"], meta["sample_dt"]) == (True, 5, 5, 2, 1.0)
    assert lines[1] == "time,infected_count"
    assert lines[2] == "0,6"


def test_chain_hitting_probability(capsys):
    assert main(["chain", "--lambda", "1", "--k", "60", "--a", "15", "--b", "5", "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    (record,) = payload["rows"]
    assert payload["config"]["mode"] == "fixed"
    assert (payload["config"]["a"], payload["config"]["b"], payload["config"]["k"]) == (15, 5, 60)
    assert record["L"] == 20
    assert 0.0 < record["exact"] < 1.5**-10


def test_chain_min_k(capsys):
    assert main(["chain", "--lambda", "1", "--min-k", "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["rows"][0]["min_k"] == 18
    assert payload["config"]["min_k"] is True


def test_curve_file(tmp_path):
    out = tmp_path / "fig1.csv"
    assert main(["curve", "--p-min", "0.01", "--p-max", "0.99", "--step", "0.01", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "p,lambda2_upper,lambda1_upper,capped"
    assert len(lines) == 2 + 99


def test_exponents_to_stdout(capsys):
    assert main(["exponents", "--alpha-min", "2.25", "--alpha-max", "2.5", "--step", "0.25", "--out", "-"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1] == "alpha,beta_meanfield,beta_rigorous"
    assert lines[2].startswith("2.25,")


def test_load_config(tmp_path):
    path = tmp_path / "ignite.json"
    path.write_text(json.dumps({"experiment": "ignite", "lambda": 1.0, "k": 1000000, "replicas": 10000, "seed": 7}))
    cfg = load_config(str(path))
    assert (cfg.experiment, cfg.lam, cfg.k, cfg.seed) == ("ignite", 1.0, 1000000, 7)


def test_bad_config_exits_one(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"experiment": "ignite", "lambda": -1}))
    assert main(["experiment", "--config", str(path)]) == 1
    assert error_of(capsys)["error"] == "ConfigError"


def test_flag_overrides_config_file(tmp_path):
    path = tmp_path / "transfer.json"
    path.write_text(json.dumps({"experiment": "transfer", "lambda": 1.0, "rs": [1], "replicas": 50, "seed": 5}))
    out = tmp_path / "out" / "transfer.json"
    assert main(["experiment", "--config", str(path), "--lambda", "2", "--format", "json", "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["config"]["lambda"] == 2.0
    assert payload["config"]["lambdas"] == [2.0]
    assert all(row["lambda"] == 2.0 for row in payload["rows"])


def test_experiment_without_config_or_name(capsys):
    assert main(["experiment"]) == 1
    assert error_of(capsys)["error"] == "UsageError"


def test_malformed_schedule_is_config_error(capsys):
    argv = ["experiment", "--experiment", "config-persistence", "--schedule", "powerlaw:a=abc,eta=0.2"]
    assert main(argv) == 1
    error = error_of(capsys)
    assert error["error"] == "ConfigError"
    assert "abc" in error["message"]


def test_missing_edge_list_is_config_error(tmp_path, capsys):
    assert main(["eig", "--input", str(tmp_path / "missing.txt")]) == 1
    assert error_of(capsys)["error"] == "ConfigError"


def test_unwritable_output_exits_two(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["gen", "--graph", "star", "--k", "3", "--out", str(blocker / "star.txt")]) == 2
    assert "error" in error_of(capsys)


def test_generated_graph_records_drawn_seed(tmp_path):
    out = tmp_path / "config.txt"
    assert main(["gen", "--graph", "config", "--n", "20", "--dist", "geom:p=0.5", "--out", str(out)]) == 0
    meta = config_line(out.read_text().splitlines()[1])
    assert isinstance(meta["seed"], int)
    assert meta["dist"] == "geom:p=0.5"
    again = tmp_path / "again.txt"
    argv = ["gen", "--graph", "config", "--n", "20", "--dist", "geom:p=0.5", "--seed", str(meta["seed"])]
    assert main(argv + ["--out", str(again)]) == 0
    assert again.read_text().splitlines()[2:] == out.read_text().splitlines()[2:]


def test_simulate_csv_carries_config_line(capsys):
    assert main(["simulate", "--graph", "path", "--r", "3", "--lambda", "0.5", "--replicas", "2", "--seed", "9"]) == 0
    lines = capsys.readouterr().out.splitlines()
    meta = config_line(lines[0])
    assert (meta["graph"], meta["r"], meta["lambda"], meta["seed"]) == ("path", 3, 0.5, 9)
    assert lines[1].startswith("stop_reason,")
