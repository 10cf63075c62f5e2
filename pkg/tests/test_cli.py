import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fatiguelife import cli
from fatiguelife.dataset import load_csv, to_csv

from conftest import IA


@pytest.fixture(scope="module")
def data_csv(ia_data, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "data.csv"
    to_csv(ia_data, path)
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def test_fit_writes_json(data_csv, tmp_path):
    assert run("fit", "--data", data_csv, "--model", "Ia", "--starts", 2, "--out", tmp_path,
               "--seed", 3) == 0
    doc = json.loads((tmp_path / "fit.json").read_text())
    assert doc["kind"] == "Ia" and doc["seed"] == 3 and doc["seed_generated"] is False
    assert doc["AIC"] == pytest.approx(10 - 2 * doc["loglik"], rel=1e-9)
    assert set(doc["params"]) == {"A1", "A2", "A3", "q", "tau"}
    assert all(v > 0 for v in doc["standard_errors"].values())


def test_fit_logfit(data_csv, tmp_path):
    assert run("fit", "--data", data_csv, "--model", "LogFit", "--out", tmp_path,
               "--exclude-runouts", 1) == 0
    doc = json.loads((tmp_path / "fit.json").read_text())
    assert doc["include_runouts"] is False and doc["e_std"] > 0


def test_same_seed_same_bytes(data_csv, tmp_path):
    for d in ("a", "b"):
        assert run("bootstrap", "--data", data_csv, "--model", "Ia", "--replicates", 6,
                   "--seed", 7, "--s-grid", "40,80,5", "--out", tmp_path / d) == 0
    for name in ("bootstrap.json", "bootstrap_bands.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    table = rows(tmp_path / "a" / "bootstrap_bands.csv")
    assert table[0] == ["s_eq", "p", "lo", "median", "hi"] and len(table) == 1 + 15


def test_seed_generated_and_reported(data_csv, tmp_path, capsys):
    assert run("simulate", "--model", "Ia", "--params", _params(tmp_path), "--data", data_csv,
               "--out", tmp_path) == 0
    err = capsys.readouterr().err
    assert "using seed" in err
    text = (tmp_path / "simulated.csv").read_text()
    assert "# seed_generated=True" in text
    seed = int(err.split("using seed")[1].split()[0])
    assert f"# seed={seed}" in text


def _params(tmp_path):
    p = tmp_path / "params.json"
    p.write_text(json.dumps(dict(zip(("A1", "A2", "A3", "q", "tau"), IA))))
    return p


def test_simulate_replicates_design(data_csv, tmp_path):
    assert run("simulate", "--model", "Ia", "--params", _params(tmp_path), "--data", data_csv,
               "--replicate", 2, "--seed", 1, "--out", tmp_path, "--censor-at", 1e6) == 0
    sim = load_csv(tmp_path / "simulated.csv")
    orig = load_csv(data_csv)
    assert len(sim) == 2 * len(orig)
    assert np.all(sim.cycles <= 1e6) and np.all(sim.cycles[sim.runout] == 1e6)


def test_predict_from_fit_json(data_csv, tmp_path):
    run("fit", "--data", data_csv, "--model", "Ia", "--starts", 1, "--out", tmp_path)
    assert run("predict", "--model", "Ia", "--params", tmp_path / "fit.json",
               "--s-grid", "40,80,9", "--p", "0.1,0.9", "--out", tmp_path) == 0
    table = rows(tmp_path / "predict.csv")
    assert table[0] == ["s_eq", "p", "cycles"] and len(table) == 19
    lo = [float(r[2]) for r in table[1:10]]
    hi = [float(r[2]) for r in table[10:]]
    assert all(a < b for a, b in zip(lo, hi))
    assert lo == sorted(lo, reverse=True)


def test_profile(data_csv, tmp_path):
    assert run("profile", "--data", data_csv, "--model", "Ia", "--grid", "25,40,31",
               "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "profile.json").read_text())
    lo, hi = doc["ci"]
    assert lo < doc["mle"]["params"]["A3"] < hi
    assert len(rows(tmp_path / "profile.csv")) == 32


def test_mcmc_and_compare(data_csv, tmp_path):
    assert run("mcmc", "--data", data_csv, "--model", "Ia", "--scenario", 1, "--shorten", 200,
               "--seed", 2, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc["draws"] == 100 and 0 < doc["acceptance_rate"] < 1
    assert (tmp_path / "chain_Ia_1.csv").is_file()
    assert run("compare", "--data", data_csv, "--models", "Ia,Ib",
               "--criteria", "AIC,BIC,lppd,WAIC", "--shorten", 200, "--seed", 2,
               "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "compare.json").read_text())
    assert sorted(rep["rankings"]["AIC"]) == ["Ia", "Ib"]
    assert rows(tmp_path / "compare.csv")[0] == ["model", "p", "AIC", "BIC", "lppd", "WAIC"]


def test_config_file_and_flag_precedence(data_csv, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text(f"# comment\nmodel=Ia\ndata={data_csv}\nstarts=1\nseed=5\n")
    assert run("fit", "--config", conf, "--seed", 9, "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "fit.json").read_text())
    assert doc["seed"] == 9 and doc["start_points_used"] == 1
    conf.write_text("bogus=1\n")
    assert run("fit", "--config", conf, "--out", tmp_path) == 1


@pytest.mark.parametrize("argv, error", [
    (["fit", "--model", "Ia"], "CLIError"),
    (["fit", "--model", "Zz", "--data", "x.csv"], "ValueError"),
    (["fit", "--model", "Ia", "--data", "missing.csv"], "FileNotFoundError"),
    (["fit", "--bogus"], "CLIError"),
    ([], "CLIError"),
    (["compare", "--models", "Ia", "--criteria", "nope", "--data", "DATA"], "CLIError"),
])
def test_errors_are_single_json_lines(argv, error, data_csv, capsys):
    argv = [str(data_csv) if a == "DATA" else a for a in argv]
    assert cli.main(argv) == 1
    err = capsys.readouterr().err.strip().splitlines()
    rec = json.loads(err[-1])
    assert rec["error"] == error and rec["message"]


def test_console_entry_point_version():
    out = subprocess.run([sys.executable, "-m", "fatiguelife.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "fatiguelife" in out.stdout
