import json

from beepsim.cli import main


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_simultaneous_identical_inputs(capsys):
    code, out, _ = run_cli(["run", "--p", "0.3", "--epsilon", "0.2", "--n", "2",
                            "--schedule", "simultaneous", "--inputs", "5,5",
                            "--seed", "7"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    outcome = json.loads(lines[-1])
    assert outcome["outcome"] == "success"
    tail = json.loads(lines[-2])
    assert tail["outputs"]["0"][0] == 5 and tail["outputs"]["1"][0] == 5


def test_run_is_byte_identical_on_rerun(tmp_path, capsys):
    args = ["run", "--p", "0.3", "--epsilon", "0.2", "--n", "2",
            "--schedule", "staggered:0,3", "--inputs", "5,3", "--seed", "99"]
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(args + ["--output", str(a)]) in (0, 1)
    assert main(args + ["--output", str(b)]) in (0, 1)
    assert a.read_bytes() == b.read_bytes()


def test_run_fault_free_mixed_inputs_settles_on_default(capsys):
    bits = "0" * 401
    code, out, _ = run_cli(["run", "--p", "0.1", "--epsilon", "0.5", "--n", "2",
                            "--schedule", "staggered:0,-", "--inputs", "5,3",
                            "--horizon", "400", "--faults", f"explicit:{bits}"], capsys)
    assert code == 0
    tail = json.loads(out.strip().splitlines()[-2])
    assert tail["outputs"]["0"][0] == 3 and tail["outputs"]["1"][0] == 3


def test_run_missing_inputs_is_usage_error(capsys):
    code, _, err = run_cli(["run", "--p", "0.3", "--epsilon", "0.2", "--n", "2",
                            "--schedule", "simultaneous", "--seed", "7"], capsys)
    assert code == 2
    assert "inputs" in err


def test_run_missing_seed_for_seeded_faults_is_usage_error(capsys):
    code, _, err = run_cli(["run", "--p", "0.3", "--epsilon", "0.2", "--n", "1",
                            "--schedule", "simultaneous", "--inputs", "5"], capsys)
    assert code == 2
    assert "seed" in err


def test_montecarlo_identical_inputs_zero_failures(capsys):
    code, out, _ = run_cli(["montecarlo", "--p", "0.4", "--epsilon", "0.5", "--n", "2",
                            "--schedule", "simultaneous", "--inputs", "9,9",
                            "--trials", "200", "--seed", "3"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["failures"] == 0
    assert doc["trials"] == 200
    assert {"gamma", "x", "max_success_round", "ci_low", "ci_high"} <= set(doc)


def test_montecarlo_byte_identical_and_worker_invariant(tmp_path):
    args = ["montecarlo", "--p", "0.3", "--epsilon", "0.5", "--n", "2",
            "--schedule", "staggered:0,2", "--inputs", "1,2",
            "--trials", "400", "--seed", "17"]
    a, b, c = (tmp_path / n for n in ("a.json", "b.json", "c.json"))
    assert main(args + ["--output", str(a)]) == 0
    assert main(args + ["--output", str(b)]) == 0
    assert main(args + ["--workers", "2", "--output", str(c)]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_exact_simultaneous_identical_is_zero(capsys):
    code, out, _ = run_cli(["exact", "--p", "0.5", "--stage-epsilon", "0.5", "--n", "2",
                            "--schedule", "simultaneous", "--inputs", "4,4"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["failure_probability"] == "0/1"
    assert doc["branch_count"] == 0


def test_exact_single_processor_is_zero(capsys):
    code, out, _ = run_cli(["exact", "--p", "0.5", "--stage-epsilon", "0.5", "--n", "1",
                            "--schedule", "simultaneous", "--inputs", "11"], capsys)
    assert code == 0
    assert json.loads(out)["failure_probability"] == "0/1"


def test_exact_budget_exceeded_exits_3(capsys):
    code, _, err = run_cli(["exact", "--p", "0.5", "--stage-epsilon", "0.5", "--n", "3",
                            "--schedule", "staggered:0,4,-", "--inputs", "5,3,9",
                            "--branch-budget", "3"], capsys)
    assert code == 3
    assert "budget" in err


def test_sweep_without_grid_is_usage_error(capsys):
    code, _, err = run_cli(["sweep", "--p", "0.3", "--epsilon", "0.5", "--n", "2",
                            "--schedule", "simultaneous", "--inputs", "1,1",
                            "--trials", "10", "--seed", "1"], capsys)
    assert code == 2
    assert "grid" in err


def test_sweep_gamma_x_monotone_in_p(capsys):
    code, out, _ = run_cli(["sweep", "--epsilon", "0.5", "--n", "2",
                            "--schedule", "simultaneous", "--inputs", "1,1",
                            "--p-grid", "0.1,0.5,0.9", "--trials", "20",
                            "--seed", "2"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].split(",")[:6] == ["p", "epsilon", "gamma", "x", "n", "schedule_kind"]
    gammas = [int(line.split(",")[2]) for line in lines[1:]]
    xs = [int(line.split(",")[3]) for line in lines[1:]]
    assert gammas == sorted(gammas)
    assert xs == sorted(xs)


def test_sweep_w_grid_round_growth(capsys):
    code, out, _ = run_cli(["sweep", "--p", "0.2", "--epsilon", "0.5", "--n", "2",
                            "--schedule", "simultaneous",
                            "--w-grid", "1,16,256", "--trials", "20",
                            "--seed", "4"], capsys)
    assert code == 0
    lines = out.strip().splitlines()[1:]
    ws = [int(line.split(",")[6]) for line in lines]
    fails = [int(line.split(",")[8]) for line in lines]
    assert ws == [1, 16, 256]
    assert fails == [0, 0, 0]


def test_check_accepts_generated_trace_and_rejects_tampered(tmp_path, capsys):
    trace_path = tmp_path / "trace.jsonl"
    assert main(["run", "--p", "0.3", "--epsilon", "0.5", "--n", "2",
                 "--schedule", "staggered:0,2", "--inputs", "5,3", "--seed", "21",
                 "--output", str(trace_path)]) in (0, 1)
    code, out, _ = run_cli(["check", str(trace_path)], capsys)
    assert code == 0
    assert out.strip().endswith("0 violation(s)")

    tampered = []
    for line in trace_path.read_text().strip().splitlines():
        obj = json.loads(line)
        if "round" in obj and obj["round"] == 1:
            obj["beepers"] = [0, 1]
        tampered.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    bad_path = tmp_path / "bad.jsonl"
    bad_path.write_text("\n".join(tampered) + "\n")
    code, out, _ = run_cli(["check", str(bad_path)], capsys)
    assert code == 1


def test_inputs_outside_value_set_is_usage_error(capsys):
    code, _, err = run_cli(["run", "--p", "0.3", "--epsilon", "0.5", "--n", "2",
                            "--schedule", "simultaneous", "--inputs", "5,3",
                            "--value-set", "0-2", "--seed", "1"], capsys)
    assert code == 2
    assert "value set" in err


def test_config_file_supplies_defaults_and_flags_override(tmp_path, capsys):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"p": "0.3", "epsilon": "0.5", "n": 2,
                                "schedule": "simultaneous", "inputs": "5,5",
                                "seed": 7}))
    code, out, _ = run_cli(["run", "--config", str(conf)], capsys)
    assert code == 0
    code2, out2, _ = run_cli(["run", "--config", str(conf), "--inputs", "6,6"], capsys)
    assert code2 == 0
    tail = json.loads(out2.strip().splitlines()[-2])
    assert tail["outputs"]["0"][0] == 6
