import json

import pandas as pd
import pytest

from ou_phase_tracking import __version__, analytic
from ou_phase_tracking.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_TRIPWIRE, EXIT_USAGE, main
from ou_phase_tracking.model import ModelParams

FAST = ["--horizon", "20", "--dt", "0.01"]


def read(path):
    return pd.read_csv(path, comment="#")


def header_lines(path):
    return [line for line in path.read_text().splitlines() if line.startswith("#")]


class Test_cmd_analytic:
    def test_unit_params(self, tmp_path):
        out = tmp_path / "analytic.csv"
        assert main(["analytic", "--out", str(out)]) == EXIT_OK
        frame = read(out).set_index("quantity")
        assert list(frame.columns) == ["kind", "value", "lambda0_limit"]
        assert frame.loc["kalman", "value"] == pytest.approx(0.309017, abs=1e-6)
        assert frame.loc["kalman", "kind"] == "covariance"
        assert frame.loc["K_f", "kind"] == "auxiliary"
        assert frame.loc["sql", "lambda0_limit"] == pytest.approx(0.707107, abs=1e-6)

    def test_lambda_zero(self, tmp_path):
        out = tmp_path / "analytic.csv"
        assert main(["analytic", "--lambda", "0", "--out", str(out)]) == EXIT_OK
        frame = read(out).set_index("quantity")
        assert frame.loc["sql", "value"] == pytest.approx(0.707107, abs=1e-6)
        assert frame.loc["rts", "value"] == pytest.approx(0.25, rel=1e-11)

    def test_bad_kappa(self, tmp_path, capsys):
        assert main(["analytic", "--kappa", "-1", "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE
        assert "kappa" in capsys.readouterr().err
        assert not (tmp_path / "x.csv").exists()

    def test_header(self, tmp_path):
        out = tmp_path / "analytic.csv"
        main(["analytic", "--seed", "7", "--out", str(out)])
        lines = header_lines(out)
        assert f"# version = {__version__}" in lines
        assert "# seed = 7" in lines
        assert "# command = analytic" in lines
        assert not any(line.startswith("# jobs") for line in lines)

    def test_json(self, tmp_path):
        out = tmp_path / "analytic.json"
        assert main(["analytic", "--format", "json", "--out", str(out)]) == EXIT_OK
        payload = json.loads(out.read_text())
        assert payload["header"]["command"] == "analytic"
        kalman = next(row for row in payload["rows"] if row["quantity"] == "kalman")
        assert kalman["value"] == pytest.approx(0.309017, abs=1e-6)


class Test_config:
    def test_flags_override_file(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("# unit study\nlambda = 2\nkappa=3  # inline\n\nalpha = 0.5\n")
        out = tmp_path / "analytic.csv"
        assert main(["analytic", "--config", str(config), "--kappa", "4", "--out", str(out)]) == EXIT_OK
        lines = header_lines(out)
        assert "# lam = 2" in lines
        assert "# kappa = 4" in lines
        assert "# alpha = 0.5" in lines

    def test_unknown_key(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("gamma = 1\n")
        assert main(["analytic", "--config", str(config)]) == EXIT_USAGE
        assert "unknown key 'gamma'" in capsys.readouterr().err

    def test_bad_value(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("trials = many\n")
        assert main(["ensemble", "--config", str(config)]) == EXIT_USAGE
        assert "trials" in capsys.readouterr().err


class Test_cmd_compare:
    def test_default_grid(self, tmp_path):
        out = tmp_path / "compare.csv"
        assert main(["compare", "--out", str(out)]) == EXIT_OK
        frame = read(out)
        assert list(frame.columns) == ["lambda", "sql", "tw_filter", "tw_smoother", "kalman", "rts"]
        assert len(frame) == 51
        assert (frame["rts"] <= frame["kalman"]).all()
        assert (frame["kalman"] < frame["sql"]).all()

    def test_empirical_columns(self, tmp_path):
        out = tmp_path / "compare.csv"
        assert main(["compare", "--grid", "0.5,1", "--trials", "3", *FAST, "--out", str(out)]) == EXIT_OK
        frame = read(out)
        assert {"rts_mc", "rts_se", "kalman_mc"} <= set(frame.columns)

    def test_empty_grid(self, capsys):
        assert main(["compare", "--grid", ""]) == EXIT_USAGE
        assert "grid" in capsys.readouterr().err


class Test_cmd_robust:
    def test_one_file_per_mu(self, tmp_path):
        out = tmp_path / "robust.csv"
        assert main(["robust", "--out", str(out)]) == EXIT_OK
        for mu in ("0.5", "0.8", "0.9"):
            path = tmp_path / f"robust_mu{mu}.csv"
            frame = read(path)
            assert list(frame.columns) == ["delta", "rts_mse", "robust_mse"]
            assert f"# mu = {mu}" in header_lines(path)
        near_one = read(tmp_path / "robust_mu0.9.csv").iloc[-1]
        assert near_one["robust_mse"] < near_one["rts_mse"]

    def test_zero_mu(self, tmp_path):
        out = tmp_path / "robust.csv"
        assert main(["robust", "--mu", "0", "--out", str(out)]) == EXIT_OK
        frame = read(out)
        assert frame["robust_mse"].to_numpy() == pytest.approx(frame["rts_mse"].to_numpy(), rel=1e-8)

    def test_zero_delta_row(self, tmp_path):
        out = tmp_path / "robust.csv"
        assert main(["robust", "--mu", "0.5", "--grid", "-0.5,0,0.5", "--out", str(out)]) == EXIT_OK
        frame = read(out)
        assert frame.loc[1, "rts_mse"] == pytest.approx(analytic.rts_cov_gain(ModelParams()).cov, rel=1e-10)


class Test_cmd_ensemble:
    def test_two_smoothers(self, tmp_path):
        out = tmp_path / "ensemble.csv"
        code = main(["ensemble", "--schemes", "rts,two-filter", "--trials", "8", *FAST, "--out", str(out)])
        assert code == EXIT_OK
        frame = read(out)
        assert list(frame.columns) == ["scheme", "analytic", "empirical", "se", "z", "n_trials"]
        assert list(frame["scheme"]) == ["rts", "two-filter"]
        assert frame["n_trials"].tolist() == [8, 8]

    def test_unknown_scheme(self, capsys):
        assert main(["ensemble", "--schemes", "rts,particle"]) == EXIT_USAGE
        assert "particle" in capsys.readouterr().err

    def test_tripwire(self, tmp_path, monkeypatch):
        monkeypatch.setattr(analytic, "expected_mse", lambda *args, **kwargs: 10.0)
        code = main(["ensemble", "--schemes", "kalman", "--trials", "4", *FAST, "--out", str(tmp_path / "e.csv")])
        assert code == EXIT_TRIPWIRE
        assert (tmp_path / "e.csv").exists()

    def test_numerical_failure(self, capsys):
        code = main(["ensemble", "--schemes", "kalman", "--trials", "2", "--alpha", "10", "--dt", "0.05", "--horizon", "10"])
        assert code == EXIT_NUMERICAL
        assert "trial 0" in capsys.readouterr().err

    def test_byte_identical_across_jobs(self, tmp_path):
        args = ["ensemble", "--schemes", "kalman,robust", "--trials", "4", *FAST]
        main([*args, "--jobs", "1", "--out", str(tmp_path / "a.csv")])
        main([*args, "--jobs", "2", "--out", str(tmp_path / "b.csv")])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
