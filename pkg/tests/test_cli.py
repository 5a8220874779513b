import json
import subprocess
import sys

import pytest

from fptgap.cli import main
from fptgap.instances import SetSystem, dump, load


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture
def example(tmp_path):
    p = tmp_path / "ss.json"
    dump(SetSystem(4, [[0, 1], [2, 3], [0, 2]]), p)
    return p


@pytest.fixture
def line(tmp_path, capsys):
    p = tmp_path / "line.json"
    run(capsys, "generate", "metric", "--n", 3, "--shape", "line", "--positions", "0,2,3",
        "--clients", "0,1", "--facilities", "1,2", "--instance-out", p)
    return p


def test_solve_maxcov(capsys, example):
    code, doc = run(capsys, "solve", "maxcov", "--input", example, "--k", 2)
    assert code == 0 and doc == {"value": [1, 1], "witness": [0, 1]}
    code, doc = run(capsys, "solve", "maxcov", "--input", example, "--k", 2, "--greedy")
    assert doc["value"] == [1, 1]


def test_solve_kmedian_squared(capsys, line):
    code, doc = run(capsys, "solve", "kmedian", "--input", line, "--k", 1, "--squared")
    assert doc == {"value": 4, "witness": [1]}


def test_reduce_cov2vcsp_and_solve(capsys, example, tmp_path):
    out = tmp_path / "red"
    code, doc = run(capsys, "reduce", "cov2vcsp", "--input", example, "--k", 2, "--tau", "1", "--out-dir", out)
    assert code == 0 and doc["M"] == 3
    assert (out / "report.json").exists()
    code, doc = run(capsys, "solve", "vcsp", "--input", out / "vcsp.json")
    assert doc["value"] == [1, 6]


def test_reduce_uni_deterministic(capsys, example, tmp_path):
    for d in ("a", "b"):
        run(capsys, "reduce", "uni", "--input", example, "--k", 2, "--tau", "1/2", "--delta", "1/2",
            "--seed", 7, "--m-override", 16, "--out-dir", tmp_path / d)
    assert (tmp_path / "a" / "reduced.json").read_bytes() == (tmp_path / "b" / "reduced.json").read_bytes()


def test_reduce_vcsp2csp_limit(capsys, example, tmp_path):
    run(capsys, "reduce", "cov2vcsp", "--input", example, "--k", 2, "--tau", "1", "--out-dir", tmp_path / "v")
    code, doc = run(capsys, "reduce", "vcsp2csp", "--input", tmp_path / "v" / "vcsp.json", "--c", "1/6",
                    "--s", "1/9", "--out-dir", tmp_path / "c", "--limit", 3)
    assert code == 0 and doc["written"] == 3 and doc["some_instance_fully_satisfiable"]
    rep = json.loads((tmp_path / "c" / "report.json").read_text())
    assert len(rep["written"]) == 3
    csp = load(tmp_path / "c" / rep["written"][0]["file"])
    assert sum(e.weight for e in csp.edges) == sum(rep["written"][0]["theta"])


def test_pipeline_command(capsys, example, tmp_path):
    code, doc = run(capsys, "pipeline", "--input", example, "--k", 2, "--tau", "1", "--delta", "1/2",
                    "--seed", 3, "--m-override", 16, "--out-dir", tmp_path / "p", "--limit", 1)
    assert code == 0
    assert doc["final_soundness"] == [14, 15] and doc["tau_prime"] == [5, 16]
    assert (tmp_path / "p" / "csp_000000.json").exists()


def test_kmed2cov(capsys, line, tmp_path):
    code, doc = run(capsys, "reduce", "kmed2cov", "--input", line, "--k", 1, "--tau", 2, "--alpha", 1,
                    "--delta", 1, "--out-dir", tmp_path / "k")
    assert code == 0 and doc["emitted"] == 4
    rep = json.loads((tmp_path / "k" / "report.json").read_text())
    assert [g["threshold"] for g in rep["guesses"]] == [4, 6, 0, 2]


def test_maxcover_round(capsys, tmp_path):
    mc = tmp_path / "mc.json"
    code, doc = run(capsys, "generate", "maxcover", "--k", 2, "--left-sizes", "1,1", "--right-sizes", "2,2",
                    "--planted", "--seed", 1, "--instance-out", mc)
    assert doc["value"]["value"] == [1, 1]
    code, doc = run(capsys, "reduce", "maxcover2cov", "--input", mc, "--T", 1, "--out", tmp_path / "ss.json",
                    "--emit-codec", tmp_path / "codec.json")
    assert code == 0 and doc["universe_size"] == 8 and doc["solution_size"] == 2
    codec = json.loads((tmp_path / "codec.json").read_text())
    assert len(codec["elements"]) == 8
    code, doc = run(capsys, "solve", "maxcov", "--input", tmp_path / "ss.json", "--k", 2)
    assert doc["value"] == [1, 1]


def test_certify_exit_codes(capsys, tmp_path, line):
    inst, cert = tmp_path / "yes.json", tmp_path / "yes.cert.json"
    code, _ = run(capsys, "generate", "planted-cover", "--n-sets", 4, "--m", 6, "--k", 2, "--seed", 3,
                  "--instance-out", inst, "--out", cert)
    assert code == 0
    code, doc = run(capsys, "certify", "pipeline", "--input", inst, "--certificate", cert,
                    "--m-override", 64, "--trials", 3, "--out", tmp_path / "rep.json")
    assert code == 0 and all(doc["verdicts"].values())
    full = json.loads((tmp_path / "rep.json").read_text())
    assert len(full["records"]) == 3
    code, doc = run(capsys, "certify", "kmedian", "--input", line, "--k", 1, "--tau", 2, "--alpha", 1, "--delta", 1)
    assert code == 0 and doc["verdicts"]["completeness"]


def test_certify_failing_verdict_exit_code(capsys, tmp_path):
    # a YES certificate with a pass-rate requirement that one trial cannot meet: tiny reduced universe
    inst, cert = tmp_path / "yes.json", tmp_path / "cert.json"
    run(capsys, "generate", "planted-cover", "--n-sets", 4, "--m", 6, "--k", 2, "--seed", 3,
        "--instance-out", inst, "--out", cert)
    code, doc = run(capsys, "certify", "pipeline", "--input", inst, "--certificate", cert,
                    "--m-override", 1, "--trials", 10)
    assert code == (0 if all(doc["verdicts"].values()) else 1)
    assert doc["statistics"]["successes"] < 10


def test_errors_exit_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind":"set_system","version":1,"universe_size":2,"sets":[[5]]}')
    assert main(["solve", "maxcov", "--input", str(bad), "--k", "1"]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["solve", "maxcov", "--input", str(tmp_path / "missing.json"), "--k", "1"]) == 2


def test_module_entry_point(tmp_path, example):
    out = subprocess.run([sys.executable, "-m", "fptgap", "solve", "maxcov", "--input", str(example), "--k", "1"],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["value"] == [1, 2]
