import csv
import subprocess
import sys

import numpy as np
import pytest

from halftaper import cli, experiments
from halftaper.errors import ConfigError, NotPositiveDefinite, NumericalFailure
from halftaper.experiments import load_config, scaled_covariance
from halftaper.simulate import read_ensemble_raw

SMALL_1D = ["--set", "kind=profile1d", "--set", "n_real=12", "--set", "theta_ratios=[0.5, 1.0]"]


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def _header(path):
    with open(path) as fh:
        return [line for line in fh if line.startswith("#")]


def test_experiment_writes_outputs(tmp_path, capsys):
    assert cli.main(["experiment", "--out", str(tmp_path), "--seed", "3"] + SMALL_1D) == 0
    for name in ("responses.csv", "ks.csv", "boxplot.csv", "subtitles.csv"):
        assert (tmp_path / name).exists()
    ks = _rows(tmp_path / "ks.csv")
    assert len(ks) == 1 + 2 * 2 * 2       # ratios x responses x {T, HT}
    assert "vs F" in capsys.readouterr().out
    assert any("config_digest" in h for h in _header(tmp_path / "ks.csv"))


def test_experiment_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["experiment", "--out", str(a)] + SMALL_1D) == 0
    assert cli.main(["experiment", "--out", str(b), "--workers", "2"] + SMALL_1D) == 0
    for name in ("responses.csv", "ks.csv", "boxplot.csv", "subtitles.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_changes_results(tmp_path):
    cli.main(["experiment", "--out", str(tmp_path / "a"), "--seed", "1"] + SMALL_1D)
    cli.main(["experiment", "--out", str(tmp_path / "b"), "--seed", "2"] + SMALL_1D)
    assert (tmp_path / "a" / "responses.csv").read_bytes() != (tmp_path / "b" / "responses.csv").read_bytes()


def test_config_file_and_set(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("kind: transit2d\ngrid:\n  counts: [8, 8]\nn_data: 6\nn_samples: 2\nn_real: 2\n"
                   "theta_ratios: [0.5]\neffective_range: 4\n")
    c = load_config(str(cfg), ["n_real=3", "grid.spacing=2.0"])
    assert c["n_real"] == 3 and c["grid"] == {"counts": [8, 8], "spacing": 2.0}
    assert c["seed"] == experiments.COMMON["seed"]
    assert cli.main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert len(_rows(tmp_path / "o" / "responses.csv")) == 1 + 3 * 2 * 2


def test_digest_ignores_non_semantic_keys():
    a = load_config(None, ["kind=profile1d"], workers=1, out="x")
    b = load_config(None, ["kind=profile1d"], workers=4, out="y")
    c = load_config(None, ["kind=profile1d"], seed=5)
    assert a.digest == b.digest != c.digest
    assert a.header()[1] == f"config_digest {a.digest}"


def test_simulate_command(tmp_path):
    args = ["simulate", "--out", str(tmp_path), "--mode", "T", "--theta-ratio", "0.5"] + SMALL_1D
    assert cli.main(args) == 0
    vals, meta = read_ensemble_raw(tmp_path / "ensemble_T.f64")
    assert vals.shape == (12, 100) and meta["mode"] == "T" and meta["theta_ratio"] == 0.5
    rows = _rows(tmp_path / "ensemble_T.csv")
    assert float(rows[1][2]) == vals[0, 0]


def test_mse_sweep_and_sparsity_table(tmp_path):
    assert cli.main(["mse-sweep", "--out", str(tmp_path), "--set", "n_samples=2", "--set", "n_data=50",
                     "--set", "covariances=[exponential]", "--set", "tapers=[spherical]",
                     "--set", "theta_ratios=[0.2, 1.0]"]) == 0
    rows = _rows(tmp_path / "mse_sweep.csv")
    assert len(rows) >= 3
    assert cli.main(["sparsity-table", "--out", str(tmp_path), "--set", "n_points=200",
                     "--set", "thetas=[0.3, 0.6]", "--set", "designs=[random]",
                     "--set", "grid_2d=10", "--set", "grid_3d=6"]) == 0
    assert len(_rows(tmp_path / "sparsity.csv")) >= 3


def test_forecast(capsys):
    assert cli.main(["forecast", "--taper", "spherical(theta=0.12)", "--domain", "1", "1", "--n", "100000"]) == 0
    fields = dict(tok.split("=", 1) for tok in capsys.readouterr().out.split() if "=" in tok)
    assert float(fields["theta_norm"]) == pytest.approx(0.21, abs=0.005)
    assert float(fields["S"]) == pytest.approx(0.96, abs=0.005)
    assert fields["tail_condition"] == "yes"


@pytest.mark.parametrize("args", [
    ["experiment", "--set", "kind=nope"],
    ["experiment", "--set", "kind=profile1d", "--set", "n_data=1000"],
    ["experiment", "--set", "kind=profile1d", "--set", "bogus=1"],
    ["experiment", "--set", "kind=profile1d", "--set", "taper=triangle"],
    ["experiment", "--set", "kind=connectivity2d", "--set", "p=1.5"],
    ["experiment", "--config", "/nonexistent.yaml"],
    ["mse-sweep", "--set", "theta_ratios=[]"],
    ["forecast", "--taper", "spherical(theta=-1)", "--domain", "1", "1", "--n", "10"],
])
def test_config_errors_exit_2(args, tmp_path, capsys):
    assert cli.main(args + ["--out", str(tmp_path)] if args[0] != "forecast" else args) == 2
    assert capsys.readouterr().err


@pytest.mark.parametrize("exc", [NumericalFailure("x"), NotPositiveDefinite("y"), np.linalg.LinAlgError("z")])
def test_numerical_failure_exit_3(monkeypatch, tmp_path, exc):
    def boom(cfg):
        raise exc
    monkeypatch.setattr(experiments, "run_mse_sweep", boom)
    assert cli.main(["mse-sweep", "--out", str(tmp_path)]) == 3


def test_scaled_covariance():
    c = scaled_covariance("exponential", 3.0)
    assert c.range == pytest.approx(3.0 / np.log(20))
    assert scaled_covariance("exponential(range=2)", 3.0).range == 2.0
    with pytest.raises(ConfigError):
        load_config(None, ["kind=profile1d", "seed=-1"])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "halftaper", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "halftaper" in r.stdout
