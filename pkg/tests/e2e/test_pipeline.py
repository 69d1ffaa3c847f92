"""CLI pipeline on tiny configurations: fit, then every command that reads theta.json."""

import json

import numpy as np
import pandas as pd
import pytest
import yaml

from app.fournet.errors import EXIT_CONFIG, EXIT_NUMERIC
from fournet_cli import commands
from fournet_cli.main import main

MERTON = {"kind": "merton", "T": 1.0, "r": 0.05, "sigma": 0.15, "lam": 0.1, "jump_mean": -1.08, "jump_std": 0.4}

TINY_TRAIN = {"N": 3, "P": 201, "epochs1": 1, "epochs2": 2, "batch_size": 64, "seed": 7, "max_restarts": 0}
TINY_SAMPLER = {"eta_prime": 30.0, "prescan": 256, "max_points": 4}


def write_config(path, **sections):
    data = {
        "name": "tiny",
        "model": MERTON,
        "transform": {"a": 0.6, "c": 0.08},
        "sampler": TINY_SAMPLER,
        "train": TINY_TRAIN,
    }
    data.update(sections)
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


@pytest.fixture
def merton_config(tmp_path):
    return write_config(
        tmp_path / "merton.yaml",
        european={
            "kind": "call", "convention": "log_return", "s0": 100, "r": 0.05, "strikes": [98, 102],
            "reference_method": "merton_analytic", "x_min": -4.0, "x_max": 1.0,
        },
        bermudan={
            "s0": 100, "strike": 100, "dividend": 1.0, "r": 0.05, "maturity": 2.0, "dt": 1.0,
            "grid_sizes": [40, 80], "half_width": 10.0,
        },
        compare_cos={"terms": [64, 128], "cos_range": [-10.0, 10.0], "x_min": -1.0, "x_max": 1.0, "points": 21},
        export={"x_min": -1.0, "x_max": 1.0, "points": 21},
    )


@pytest.fixture
def fitted(tmp_path, merton_config):
    out = tmp_path / "run"
    assert main(["fit", "--config", merton_config, "--out", str(out), "--deterministic"]) == 0
    return out


class TestFit:
    def test_artifacts_written(self, fitted):
        for name in ("theta.json", "history.csv", "diagnostics.json", "partition.csv"):
            assert (fitted / name).exists()
        theta = json.loads((fitted / "theta.json").read_text())
        assert theta["network"] == "gaussian_1d"
        assert len(theta["beta"]) == 3
        assert theta["transform"] == {"a": 0.6, "c": 0.08}
        history = pd.read_csv(fitted / "history.csv")
        assert list(history.columns) == ["epoch", "phase", "mse", "mae", "total"]
        assert history["phase"].tolist() == ["amsgrad", "adam", "adam"]
        diagnostics = json.loads((fitted / "diagnostics.json").read_text())
        assert diagnostics["eta_prime"] == 30.0
        assert "density_l1" in diagnostics
        assert len(pd.read_csv(fitted / "partition.csv", header=None)) == 201

    def test_deterministic_theta_is_byte_identical(self, tmp_path, merton_config):
        first, second = tmp_path / "first", tmp_path / "second"
        assert main(["fit", "--config", merton_config, "--out", str(first), "--deterministic", "--workers", "2"]) == 0
        assert main(["fit", "--config", merton_config, "--out", str(second), "--deterministic"]) == 0
        assert (first / "theta.json").read_bytes() == (second / "theta.json").read_bytes()

    def test_seed_flag(self, tmp_path, merton_config):
        out = tmp_path / "seeded"
        assert main(["fit", "--config", merton_config, "--out", str(out), "--seed", "99"]) == 0
        assert json.loads((out / "theta.json").read_text())["seed"] == 99

    def test_two_dimensional(self, tmp_path):
        config = write_config(
            tmp_path / "m2d.yaml",
            model={
                "kind": "merton2d", "T": 1.0, "r": 0.05, "sigma1": 0.12, "sigma2": 0.15, "rho": 0.3, "lam": 0.6,
                "jump_mean1": -0.1, "jump_mean2": 0.1, "jump_std1": 0.17, "jump_std2": 0.13, "jump_rho": -0.2,
            },
            transform={"a": 1.0, "c": 0.0},
            train={"N": 2, "P": 49, "epochs1": 1, "epochs2": 1, "batch_size": 16, "seed": 3, "max_restarts": 0},
            sampler={"eta_prime": 12.0, "prescan": 256, "max_points": 3},
        )
        out = tmp_path / "m2d"
        assert main(["fit", "--config", config, "--out", str(out)]) == 0
        assert json.loads((out / "theta.json").read_text())["network"] == "gaussian_2d"
        assert main(["export-density", "--theta", str(out / "theta.json"), "--out", str(out), "--grid", "-0.5:0.5:5"]) == 0
        assert len(pd.read_csv(out / "density.csv")) == 25


class TestPricingCommands:
    def test_price_table(self, fitted, merton_config):
        assert main(["price", "--config", merton_config, "--out", str(fitted)]) == 0
        prices = pd.read_csv(fitted / "prices.csv")
        assert list(prices.columns) == ["strike", "reference", "computed", "rel_error"]
        assert prices["strike"].tolist() == [98, 102]
        assert (prices["reference"] > 0).all()

    def test_bermudan_table(self, fitted, merton_config):
        assert main(["bermudan", "--config", merton_config, "--out", str(fitted)]) == 0
        table = pd.read_csv(fitted / "bermudan.csv")
        assert table["Q"].tolist() == [40, 80]
        assert pd.isna(table["change"].iloc[0])

    def test_compare_cos(self, fitted, merton_config):
        assert main(["compare-cos", "--config", merton_config, "--out", str(fitted)]) == 0
        densities = pd.read_csv(fitted / "compare_cos.csv")
        assert list(densities.columns) == ["x", "fournet", "cos_64", "cos_128"]
        summary = pd.read_csv(fitted / "compare_cos_summary.csv")
        assert set(summary["method"]) == {"fournet", "cos_64", "cos_128"}

    def test_export_from_config(self, fitted, merton_config):
        assert main(["export-density", "--config", merton_config, "--out", str(fitted)]) == 0
        density = pd.read_csv(fitted / "density.csv")
        assert len(density) == 21
        assert list(density.columns) == ["x", "density"]


class TestFailures:
    def test_non_positive_scale(self, tmp_path):
        config = write_config(tmp_path / "bad.yaml", transform={"a": 0.0, "c": 0.0})
        assert main(["fit", "--config", config, "--out", str(tmp_path / "out")]) == EXIT_CONFIG

    def test_missing_config(self, tmp_path):
        assert main(["fit", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG

    def test_stale_theta(self, tmp_path, fitted):
        changed = write_config(
            tmp_path / "changed.yaml",
            model={**MERTON, "sigma": 0.2},
            european={"s0": 100, "r": 0.05, "strikes": [100], "reference_method": "merton_analytic",
                      "x_min": -4.0, "x_max": 1.0},
        )
        code = main(["price", "--config", changed, "--theta", str(fitted / "theta.json"), "--out", str(tmp_path)])
        assert code == EXIT_CONFIG
        assert not (tmp_path / "prices.csv").exists()

    def test_empty_grid(self, fitted):
        assert main(["export-density", "--out", str(fitted), "--grid", "1:0:5"]) == EXIT_CONFIG

    def test_missing_section(self, tmp_path, fitted):
        bare = write_config(tmp_path / "bare.yaml")
        assert main(["price", "--config", bare, "--theta", str(fitted / "theta.json")]) == EXIT_CONFIG

    def test_missing_theta(self, tmp_path, merton_config):
        assert main(["price", "--config", merton_config, "--out", str(tmp_path / "empty")]) == EXIT_CONFIG

    @pytest.mark.parametrize(
        "error", [FloatingPointError("overflow encountered"), np.linalg.LinAlgError("Singular matrix")]
    )
    def test_numeric_exceptions_exit_numeric(self, tmp_path, merton_config, monkeypatch, error):
        def failing_fit(config, out_dir):
            raise error

        monkeypatch.setattr(commands, "cmd_fit", failing_fit)
        code = main(["fit", "--config", merton_config, "--out", str(tmp_path / "out")])
        assert code == EXIT_NUMERIC
