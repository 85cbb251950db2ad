import csv
import io
import json
import subprocess
import sys

import pytest
from jsonschema import Draft202012Validator

from nsvt import cli
from nsvt._parallel import available_workers
from nsvt.errors import NonConvergenceError
from nsvt.serialize import load_schema


def run(argv, capsys):
    code = cli.run([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "sim.csv"
    assert cli.run(["simulate", "--n", "200", "--sigma2", "1", "--rho", "0.8", "--nu", "4",
                    "--seed", "7", "--beta", "0.5,1", "-o", str(path)]) == 0
    return path


def test_simulate_rows(sim_csv):
    rows = list(csv.DictReader(open(sim_csv)))
    assert len(rows) == 200
    assert list(rows[0]) == ["t", "y", "z", "x1", "x2"]
    assert all(float(r["z"]) > 0 for r in rows) and rows[0]["x1"] == "1"


def test_simulate_deterministic(capsys):
    argv = ["simulate", "--n", "50", "--seed", "3"]
    a = run(argv, capsys)[1]
    b = run(argv, capsys)[1]
    c = run(["simulate", "--n", "50", "--seed", "4"], capsys)[1]
    assert a == b and a != c


def test_fit_clem(sim_csv, capsys):
    code, out, _ = run(["fit", "-i", sim_csv, "--method", "clem", "--nu", "4"], capsys)
    assert code == 0
    result = json.loads(out)
    Draft202012Validator(load_schema("fit_result")).validate(result)
    assert 0 < result["params"]["rho"] < 1 and result["params"]["nu"] == 4
    assert "trace" not in result


def test_fit_cl_with_trace(sim_csv, capsys):
    code, out, _ = run(["fit", "-i", sim_csv, "--method", "cl", "--trace"], capsys)
    assert code == 0
    result = json.loads(out)
    Draft202012Validator(load_schema("fit_result")).validate(result)
    assert result["method"] == "CL" and result["trace"]


def test_round_trip_recovers_parameters(tmp_path, capsys):
    path = tmp_path / "big.csv"
    assert cli.run(["simulate", "--n", "5000", "--sigma2", "1", "--rho", "0.8", "--nu", "4",
                    "--beta", "0.5,1", "--seed", "21", "-o", str(path)]) == 0
    code, out, _ = run(["fit", "-i", path, "--method", "clem", "--nu", "4"], capsys)
    p = json.loads(out)["params"]
    assert code == 0
    assert p["beta"][0] == pytest.approx(0.5, abs=0.05)
    assert p["beta"][1] == pytest.approx(1.0, abs=0.05)
    assert p["sigma2"] == pytest.approx(1.0, rel=0.15)
    assert p["rho"] == pytest.approx(0.8, abs=0.1)


def test_fit_reads_stdin(sim_csv, capsys, monkeypatch):
    monkeypatch.setattr(sys, "stdin", io.StringIO(open(sim_csv).read()))
    code, out, _ = run(["fit", "--nu", "4"], capsys)
    assert code == 0 and json.loads(out)["method"] == "CLEM"


def test_json_numbers_round_trip(sim_csv, capsys):
    out = run(["fit", "-i", sim_csv, "--nu", "4"], capsys)[1]
    rho = json.loads(out)["params"]["rho"]
    assert repr(rho) in out or format(rho, ".17g") in out


def test_forecast_and_pit(sim_csv, tmp_path, capsys):
    params = tmp_path / "params.json"
    params.write_text(json.dumps({"beta": [0.5, 1.0], "sigma2": 1.0, "nu": 4.0, "rho": 0.8}))
    code, out, _ = run(["forecast", "-i", sim_csv, "--params", params, "--horizon", "2"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 200 and rows[0]["target"] == "3"
    assert all(float(r["conditional_variance"]) > 0 for r in rows)
    code, out, _ = run(["pit", "-i", sim_csv, "--params", params], capsys)
    u = [float(r["u"]) for r in csv.DictReader(io.StringIO(out))]
    assert code == 0 and len(u) == 200 and all(0 < v < 1 for v in u)


def test_bootstrap(sim_csv, tmp_path, capsys):
    reps = tmp_path / "reps.csv"
    code, out, _ = run(["bootstrap", "-i", sim_csv, "--nu", "4", "--B", "3", "--seed", "1",
                        "--replicates", reps, "--threads", "1"], capsys)
    assert code == 0
    summary = json.loads(out)
    Draft202012Validator(load_schema("bootstrap_summary")).validate(summary)
    assert summary["B"] == 3 and len(reps.read_text().splitlines()) == 4


def test_simstudy(tmp_path, capsys):
    cfg = tmp_path / "study.json"
    cfg.write_text(json.dumps({"design": [{"n": 120, "nu": 5, "rho": 0.5, "p": 2, "sigma2": 1}],
                               "replicates": 5, "estimators": ["CLEM"]}))
    code, out, _ = run(["simstudy", "--config", cfg, "--replicates", "2", "--threads", "1"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "n,nu,rho,p,sigma2,replicate,estimator,metric,value"
    assert len(lines) == 1 + 2 * 5


def test_simstudy_toml(tmp_path, capsys):
    cfg = tmp_path / "study.toml"
    cfg.write_text('replicates = 1\nestimators = ["CL"]\n[[design]]\nn = 120\nnu = 5\nrho = 0.5\np = 1\nsigma2 = 1\n')
    code, out, _ = run(["simstudy", "--config", cfg, "--threads", "1"], capsys)
    assert code == 0 and ",CL," in out


def test_portfolio(fixtures_dir, tmp_path, capsys):
    code, out, _ = run(["portfolio", "--config", fixtures_dir / "portfolio" / "config.json",
                        "--output-dir", tmp_path, "--threads", "1"], capsys)
    assert code == 0 and json.loads(out)["windows"] == 1
    summary = json.loads((tmp_path / "summary.json").read_text())
    Draft202012Validator(load_schema("portfolio_summary")).validate(summary)


@pytest.mark.parametrize("argv", [
    ["simulate", "--n", "10", "--bogus"],
    ["nonsense"],
    [],
    ["simulate", "--n", "0"],
    ["simulate", "--n", "5", "--beta", "1,a"],
    ["fit", "--m", "0"],
    ["bootstrap", "--B", "0"],
    ["forecast", "--horizon", "0"],
    ["simulate", "--n", "5", "--threads", "0"],
])
def test_usage_errors(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == cli.EXIT_USAGE and err


def test_data_errors(tmp_path, capsys):
    assert run(["fit", "-i", tmp_path / "missing.csv"], capsys)[0] == cli.EXIT_DATA
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x1\n1.0,1\nabc,1\n")
    code, _, err = run(["fit", "-i", bad], capsys)
    assert code == cli.EXIT_DATA and "line 3" in err
    noy = tmp_path / "noy.csv"
    noy.write_text("a,x1\n1,1\n")
    assert run(["fit", "-i", noy], capsys)[0] == cli.EXIT_DATA
    assert run(["simulate", "--n", "5", "--rho", "1.5"], capsys)[0] == cli.EXIT_DATA


def test_numeric_failure(sim_csv, capsys, monkeypatch):
    def boom(*args, **kwargs):
        raise NonConvergenceError("forced")

    monkeypatch.setattr(cli, "fit_clem", boom)
    code, _, err = run(["fit", "-i", sim_csv], capsys)
    assert code == cli.EXIT_NUMERIC and "forced" in err


def test_threads_env(monkeypatch):
    monkeypatch.setenv("NSVT_THREADS", "3")
    assert available_workers() == 3
    monkeypatch.setenv("NSVT_THREADS", "zero")
    assert available_workers() >= 1


def test_console_script(sim_csv):
    proc = subprocess.run([sys.executable, "-m", "nsvt.cli", "fit", "-i", str(sim_csv), "--nu", "4"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["converged"]
    proc = subprocess.run([sys.executable, "-m", "nsvt.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("nsvt ")
