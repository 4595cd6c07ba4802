"""Command-line driver: full pipeline, determinism, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from mrgarch.cli import run
from mrgarch.io import load_params, load_returns, save_params, write_returns

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = run(["simulate", "--partition", "2,1", "--t-len", "260",
                "--seed", "7", "--out-dir", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def fit_file(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    code = run(["estimate",
                "--returns", str(sim_dir / "returns.csv"),
                "--realized", str(sim_dir / "realized.csv"),
                "--spec", "block", "--partition", "2,1",
                "--multistarts", "1", "--max-iter", "25",
                "--out-dir", str(out)])
    assert code == 0
    return out / "fit.json"


def _data_flags(sim_dir):
    return ["--returns", str(sim_dir / "returns.csv"),
            "--realized", str(sim_dir / "realized.csv")]


class TestSimulate:
    def test_reruns_are_byte_identical(self, sim_dir, tmp_path):
        assert run(["simulate", "--partition", "2,1", "--t-len", "260",
                    "--seed", "7", "--out-dir", str(tmp_path)]) == 0
        for name in ("returns.csv", "realized.csv", "truth.json",
                     "simulate.json"):
            assert (tmp_path / name).read_bytes() == \
                (sim_dir / name).read_bytes()

    def test_different_seed_changes_data(self, sim_dir, tmp_path):
        assert run(["simulate", "--partition", "2,1", "--t-len", "260",
                    "--seed", "8", "--out-dir", str(tmp_path)]) == 0
        assert (tmp_path / "returns.csv").read_bytes() != \
            (sim_dir / "returns.csv").read_bytes()

    def test_output_is_loadable(self, sim_dir):
        dates, values, assets = load_returns(sim_dir / "returns.csv")
        assert values.shape == (260, 3)
        assert assets == ("A1", "A2", "A3")
        truth = load_params(sim_dir / "truth.json")
        assert truth.loading.partition.sizes == (2, 1)

    def test_needs_partition_or_p(self, tmp_path):
        assert run(["simulate", "--out-dir", str(tmp_path)]) == 1


class TestEstimate:
    def test_rerun_is_byte_identical(self, sim_dir, fit_file, tmp_path):
        code = run(["estimate", *_data_flags(sim_dir),
                    "--spec", "block", "--partition", "2,1",
                    "--multistarts", "1", "--max-iter", "25",
                    "--out-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "fit.json").read_bytes() == fit_file.read_bytes()

    def test_fit_payload_shape(self, fit_file):
        payload = json.loads(fit_file.read_text())
        assert payload["spec"]["structure"] == "block"
        assert payload["params"]["partition"] == [2, 1]
        assert np.isfinite(payload["objective"])
        assert payload["diagnostics"]["iterations"] <= 25

    def test_unknown_spec_is_usage_error(self, sim_dir, tmp_path, capfd):
        code = run(["estimate", *_data_flags(sim_dir), "--spec", "banana",
                    "--out-dir", str(tmp_path)])
        assert code == 1
        err = json.loads(capfd.readouterr().err.strip())
        assert err["error"] == "argument"
        assert "banana" in err["message"]

    def test_missing_file_is_data_error(self, tmp_path, capfd):
        code = run(["estimate", "--returns", str(tmp_path / "no.csv"),
                    "--realized", str(tmp_path / "no2.csv"),
                    "--out-dir", str(tmp_path)])
        assert code == 1
        err = json.loads(capfd.readouterr().err.strip())
        assert err["error"] == "data"


class TestFilterForecastBacktestQQ:
    def test_filter_writes_states(self, sim_dir, fit_file, tmp_path):
        code = run(["filter", *_data_flags(sim_dir),
                    "--params", str(fit_file), "--out-dir", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "states.csv").read_text().splitlines()
        assert lines[0].startswith("date,h_A1,h_A2,h_A3,zeta_1,zeta_2")
        assert len(lines) == 261

    def test_forecast_deterministic_and_sane(self, sim_dir, fit_file, tmp_path):
        args = ["forecast", *_data_flags(sim_dir), "--params", str(fit_file),
                "--horizon", "5", "--draws", "150", "--seed", "3",
                "--mode", "bootstrap"]
        assert run([*args, "--out-dir", str(tmp_path / "a")]) == 0
        assert run([*args, "--out-dir", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "forecast.json").read_bytes()
        assert a == (tmp_path / "b" / "forecast.json").read_bytes()
        payload = json.loads(a)
        mean = np.array(payload["mean_covariance"])
        assert mean.shape == (3, 3)
        np.linalg.cholesky(mean)
        assert payload["n_draws"] == 150

    def test_backtest_report_and_returns(self, sim_dir, fit_file, tmp_path):
        code = run(["backtest", *_data_flags(sim_dir),
                    "--params", str(fit_file), str(sim_dir / "truth.json"),
                    "--split", "180", "--labels", "fitted", "truth",
                    "--out-dir", str(tmp_path)])
        assert code == 0
        payload = json.loads((tmp_path / "backtest.json").read_text())
        labels = [row["label"] for row in payload["models"]]
        assert labels == ["fitted", "truth", "equal-weight"]
        assert payload["models"][0]["relative_loglik"] == 0.0
        lines = (tmp_path / "portfolio_returns.csv").read_text().splitlines()
        assert lines[0] == "date,fitted,truth,equal-weight"
        assert len(lines) == 261 - 180

    def test_backtest_split_by_date(self, sim_dir, fit_file, tmp_path):
        dates, _, _ = load_returns(sim_dir / "returns.csv")
        code = run(["backtest", *_data_flags(sim_dir),
                    "--params", str(fit_file), "--split", dates[200],
                    "--out-dir", str(tmp_path)])
        assert code == 0
        payload = json.loads((tmp_path / "backtest.json").read_text())
        assert payload["split"] == 200

    def test_qq_writes_pairs(self, sim_dir, tmp_path):
        code = run(["qq", *_data_flags(sim_dir), "--partition", "2,1",
                    "--component", "1", "--out-dir", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "qq.csv").read_text().splitlines()
        assert lines[0] == "theoretical,empirical"
        assert len(lines) == 261
        pts = np.array([[float(v) for v in line.split(",")]
                        for line in lines[1:]])
        assert np.corrcoef(pts[:, 0], pts[:, 1])[0, 1] > 0.9

    def test_qq_component_out_of_range(self, sim_dir, tmp_path):
        code = run(["qq", *_data_flags(sim_dir), "--partition", "2,1",
                    "--component", "7", "--out-dir", str(tmp_path)])
        assert code == 1


class TestErrorPaths:
    def test_divergent_params_exit_2(self, sim_dir, tmp_path, capfd):
        truth = load_params(sim_dir / "truth.json")
        import dataclasses

        bad = dataclasses.replace(truth, beta=np.full(3, 1.6),
                                  gamma=np.full(3, 0.9))
        save_params(tmp_path / "bad.json", bad)
        code = run(["filter", *_data_flags(sim_dir),
                    "--params", str(tmp_path / "bad.json"),
                    "--out-dir", str(tmp_path)])
        assert code == 2
        err = json.loads(capfd.readouterr().err.strip())
        assert err["message"]

    def test_non_pd_realized_without_repair(self, tmp_path, capfd, rng):
        dates = tuple(f"d{i:02d}" for i in range(12))
        rows = []
        for i, d in enumerate(dates):
            off = 2.0 if i == 5 else 0.1
            rows.append(f"{d},A,A,1.0\n{d},B,A,{off}\n{d},B,B,1.0")
        (tmp_path / "m.csv").write_text(
            "date,row_asset,col_asset,value\n" + "\n".join(rows) + "\n")
        write_returns(tmp_path / "r.csv", dates,
                      rng.normal(size=(12, 2)), ("A", "B"))
        base = ["qq", "--returns", str(tmp_path / "r.csv"),
                "--realized", str(tmp_path / "m.csv"),
                "--out-dir", str(tmp_path)]
        assert run(base) == 1
        err = json.loads(capfd.readouterr().err.strip())
        assert "positive" in err["message"]
        assert run([*base, "--repair-nonpd"]) == 0

    def test_usage_errors_exit_1(self, capfd):
        assert run(["bogus-command"]) == 1
        assert run([]) == 1
        assert run(["--help"]) == 0
        capfd.readouterr()


class TestConfigFile:
    def test_config_with_flag_override(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text(
            'partition = [2, 1]\nt_len = 120\nseed = 5\n', encoding="utf-8")
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        assert run(["simulate", "--config", str(config),
                    "--out-dir", str(a)]) == 0
        assert run(["simulate", "--config", str(config), "--seed", "9",
                    "--out-dir", str(b)]) == 0
        assert run(["simulate", "--partition", "2,1", "--t-len", "120",
                    "--seed", "9", "--out-dir", str(c)]) == 0
        assert (a / "returns.csv").read_bytes() != \
            (b / "returns.csv").read_bytes()
        assert (b / "returns.csv").read_bytes() == \
            (c / "returns.csv").read_bytes()

    def test_console_entry_point(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "mrgarch.cli", "simulate",
             "--partition", "2,1", "--t-len", "30", "--seed", "1",
             "--out-dir", str(tmp_path)],
            capture_output=True, text=True)
        assert result.returncode == 0
        assert "returns.csv" in result.stdout
