import csv
import io
import json
from importlib import resources

import jsonschema
import pytest

from perturb_lab import cli
from perturb_lab.generators import gnp
from perturb_lab.graph import read_edge_list

TIMING_KEYS = {"seconds"}


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def schema(name):
    return json.loads(resources.files("perturb_lab").joinpath("schemas", f"{name}.json").read_text())


def checked_json(name, text):
    doc = json.loads(text)
    jsonschema.validate(doc, schema(name))
    return doc


def strip_timings(obj):
    if isinstance(obj, dict):
        return {k: strip_timings(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timings(v) for v in obj]
    return obj


@pytest.fixture
def h13(tmp_path, capsys):
    path = tmp_path / "h13_n9.txt"
    assert run(capsys, "gen", "--family", "extremal", "--alpha", "0.3333", "--n", 9, "--out", path)[0] == 0
    return path


@pytest.fixture
def stable(tmp_path, capsys):
    path = tmp_path / "stable.txt"
    code, _, _ = run(capsys, "gen", "--family", "stable", "--alpha", "1/3", "--n", 300, "--seed", 5, "--out", path)
    assert code == 0
    return path


# gen


def test_gen_extremal_example(h13):
    g = read_edge_list(h13)
    assert g.n == 9 and g.m == 18


def test_gen_missing_n_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["gen", "--family", "gnp", "--p", "0.5"])
    assert exc.value.code == 2


@pytest.mark.parametrize(
    "extra",
    [
        ["--family", "gnp", "--n", 40, "--p", 0.2],
        ["--family", "gnp-multi", "--n", 30, "--p", 0.3, "--k", 3],
        ["--family", "gnp-digraph", "--n", 20, "--p", 0.2],
        ["--family", "stable", "--n", 60, "--alpha", "1/3"],
    ],
)
def test_gen_byte_identical(tmp_path, capsys, extra):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for dest in (a, b):
        assert run(capsys, "gen", *extra, "--seed", 11, "--out", dest)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    other = tmp_path / "c.txt"
    run(capsys, "gen", *extra, "--seed", 12, "--out", other)
    assert other.read_bytes() != a.read_bytes()


def test_gen_round_trip_through_stdout(capsys):
    code, out, _ = run(capsys, "gen", "--family", "gnp", "--n", 25, "--p", 0.3, "--seed", 4)
    assert code == 0
    assert read_edge_list(io.StringIO(out)) == gnp(25, 0.3, 4)


def test_gen_stable_witness(stable):
    doc = json.loads(stable.with_name(stable.name + ".witness.json").read_text())
    jsonschema.validate(doc, schema("witness"))
    assert len(doc["A"]) + len(doc["B"]) == 300


def test_gen_parameter_errors(capsys):
    assert run(capsys, "gen", "--family", "gnp", "--n", 5)[0] == 2
    assert run(capsys, "gen", "--family", "gnp", "--n", 5, "--p", 1.5)[0] == 2


# solve and certify


def test_solve_h13_absent(h13, capsys):
    code, out, _ = run(capsys, "solve", "--in", h13)
    doc = checked_json("solve", out)
    assert code == 0 and doc["status"] == "absent" and doc["ordering"] is None
    assert doc["version"] and doc["seed"] == 0 and doc["params"]["target"] == "cycle"


def test_solve_targets(tmp_path, capsys):
    path = tmp_path / "k6.txt"
    run(capsys, "gen", "--family", "gnp", "--n", 6, "--p", 1, "--out", path)
    doc = checked_json("solve", run(capsys, "solve", "--in", path)[1])
    assert doc["status"] == "found" and sorted(doc["ordering"]) == list(range(6))
    doc = checked_json("solve", run(capsys, "solve", "--in", path, "--target", "path", "--left", "0,1", "--right", "2,3")[1])
    assert doc["status"] == "found" and set(doc["ordering"][:2]) == {0, 1} and set(doc["ordering"][-2:]) == {2, 3}
    doc = checked_json("solve", run(capsys, "solve", "--in", path, "--target", "universal")[1])
    assert doc["status"] == "found"


def test_solve_budget_exhaustion_exits_zero(tmp_path, capsys):
    path = tmp_path / "g.txt"
    run(capsys, "gen", "--family", "gnp", "--n", 12, "--p", 0.6, "--seed", 2, "--out", path)
    code, out, _ = run(capsys, "solve", "--in", path, "--budget", 1)
    assert code == 0 and checked_json("solve", out)["status"] == "budget_exhausted"


def test_file_errors_exit_2(tmp_path, capsys):
    assert run(capsys, "solve", "--in", tmp_path / "missing.txt")[0] == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("3 1\n0 7\n")
    code, _, err = run(capsys, "solve", "--in", bad)
    assert code == 2 and "cannot parse" in err
    assert run(capsys, "embed", "--in", bad, "--k", 2, "--p", 0.1)[0] == 2


def test_certify_h13_fires(h13, capsys):
    code, out, _ = run(capsys, "certify", "--in", h13, "--A", "0,1,2", "--k", 2)
    doc = checked_json("certify", out)
    assert code == 0 and doc["status"] == "certificate"
    assert doc["result"]["kind"] == "packing_obstruction" and doc["result"]["recheck"] is True


def test_certify_no_fire(tmp_path, capsys):
    path = tmp_path / "k9.txt"
    run(capsys, "gen", "--family", "gnp", "--n", 9, "--p", 1, "--out", path)
    doc = checked_json("certify", run(capsys, "certify", "--in", path, "--A", "0,1,2", "--k", 2)[1])
    assert doc["status"] != "certificate"


# embed, gadget


def test_embed_schema_and_determinism(stable, capsys):
    argv = ["embed", "--in", stable, "--k", 2, "--p", 0.2, "--witness", str(stable) + ".witness.json", "--seed", 3]
    first = checked_json("embed", run(capsys, *argv)[1])
    second = checked_json("embed", run(capsys, *argv)[1])
    assert first["status"] in ("found", "pipeline_failed")
    assert strip_timings(first) == strip_timings(second)


def test_embed_finds_witness_itself(stable, capsys):
    doc = checked_json("embed", run(capsys, "embed", "--in", stable, "--k", 2, "--p", 0.2, "--seed", 1)[1])
    assert doc["status"] in ("found", "pipeline_failed", "no_stable_partition")


@pytest.mark.parametrize("mode,extra", [("multipartite", ["--p-scale", 40]), ("bipartite", ["--p", 0.0])])
def test_gadget_schema_and_determinism(capsys, mode, extra):
    argv = ["gadget", "--mode", mode, "--n", 300, "--seed", 2, *extra]
    first = checked_json("gadget", run(capsys, *argv)[1])
    second = checked_json("gadget", run(capsys, *argv)[1])
    assert strip_timings(first) == strip_timings(second)
    if mode == "bipartite":
        assert first["status"] == "pipeline_failed"


# sweep and fit


def test_sweep_example(capsys):
    argv = ["sweep", "--alpha", "0.3333", "--n", 9, "--p-grid", "0:0.5:11", "--trials", 200, "--decider", "exact"]
    code, out, _ = run(capsys, *argv)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 11
    assert list(rows[0]) == ["alpha", "n", "p", "trials", "successes", "decider", "seed"]
    assert rows[0]["successes"] == "0" and all(r["decider"] == "exact_oracle" for r in rows)
    succ = [int(r["successes"]) for r in rows]
    assert succ[-1] > succ[0]
    assert run(capsys, *argv)[1] == out


def test_sweep_jobs_env_default(monkeypatch, capsys):
    monkeypatch.setenv("PERTURB_LAB_JOBS", "2")
    args = cli.build_parser().parse_args(["sweep", "--alpha", "1/3", "--n", "9", "--p-grid", "0.3:0.5:2"])
    assert args.jobs == 2
    argv = ["sweep", "--alpha", "1/3", "--n", 9, "--p-grid", "0.3:0.5:2", "--trials", 20]
    parallel = run(capsys, *argv)[1]
    monkeypatch.setenv("PERTURB_LAB_JOBS", "1")
    assert run(capsys, *argv)[1] == parallel


def test_sweep_exact_decider_size_guard(capsys):
    assert run(capsys, "sweep", "--alpha", "1/3", "--n", 60, "--p-grid", "0.1:0.2:2", "--decider", "exact")[0] == 2


def test_fit_from_points_csv(tmp_path, capsys):
    path = tmp_path / "pts.csv"
    path.write_text("n,p_hat\n100,0.01\n200,0.005\n400,0.0025\n")
    code, out, _ = run(capsys, "fit", "--in", path, "--alpha", "0.4")
    doc = checked_json("fit", out)
    assert code == 0 and abs(doc["slope"] + 1) < 1e-9
    assert doc["predicted_exponent"] == -1.0


def test_fit_from_sweep_csv(tmp_path, capsys):
    sweep = tmp_path / "sweep.csv"
    lines = ["alpha,n,p,trials,successes,decider,seed"]
    for n in (100, 200, 400):
        for p, s in ((0.5 / n, 10), (1 / n, 50), (2 / n, 90)):
            lines.append(f"0.4,{n},{p},100,{s},extremal_pipeline,0")
    sweep.write_text("\n".join(lines) + "\n")
    doc = checked_json("fit", run(capsys, "fit", "--in", sweep)[1])
    assert abs(doc["slope"] + 1) < 1e-9


def test_fit_too_few_points(tmp_path, capsys):
    path = tmp_path / "pts.csv"
    path.write_text("n,p_hat\n100,0.01\n200,0.005\n")
    assert run(capsys, "fit", "--in", path)[0] == 2
