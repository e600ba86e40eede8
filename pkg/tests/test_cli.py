"""End-to-end command tests running cli.main in process against temp files."""

import json
import math
import os

import numpy as np
import pytest

from podhess import cli


def run(argv):
    return cli.main([str(a) for a in argv])


def read_rows(path):
    """(header, data_rows, footer_lines) of one output CSV."""
    header, rows, footer = None, [], []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                footer.append(line)
            elif header is None:
                header = line.split(",")
            else:
                rows.append(line.split(","))
    return header, rows, footer


TINY = ["--N", 8, "--m-star", 1, "--M", 2, "--L-max", 1, "--workers", 1]


@pytest.fixture(scope="module")
def ou_data(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "ou.csv"
    assert run(["simulate", "--model", "ou1d", "--n", 3, "--level", 6,
                "--seed", 7, "--out", path]) == 0
    return path


@pytest.fixture(scope="module")
def ou10_data(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "ou10.csv"
    assert run(["simulate", "--model", "ou1d", "--n", 10, "--level", 10,
                "--seed", 1234, "--out", path]) == 0
    return path


class TestSimulate:
    def test_outputs(self, tmp_path, capsys):
        out = tmp_path / "sim.csv"
        assert run(["simulate", "--model", "ou1d", "--n", 4, "--level", 3,
                    "--seed", 5, "--out", out]) == 0
        header, rows, _ = read_rows(out)
        assert header == ["t", "y1"]
        assert len(rows) == 4
        assert [r[0] for r in rows] == ["1.0", "2.0", "3.0", "4.0"]
        lat_header, lat_rows, _ = read_rows(tmp_path / "sim_latent.csv")
        assert lat_header == ["t", "x1"]
        assert len(lat_rows) == 4 * 8 + 1
        assert float(lat_rows[1][0]) == 0.125
        manifest = json.loads((tmp_path / "sim_manifest.json").read_text())
        assert manifest["command"][:2] == ["podhess", "simulate"]
        assert manifest["model"] == "ou1d"
        assert manifest["seed"] == 5
        assert manifest["config"]["N"] == 32
        assert manifest["version"]
        assert "sim.csv" in capsys.readouterr().out

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(["simulate", "--model", "mou2d", "--n", 5, "--seed", 3, "--out", a])
        run(["simulate", "--model", "mou2d", "--n", 5, "--seed", 3, "--out", b])
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a_latent.csv").read_bytes() == \
            (tmp_path / "b_latent.csv").read_bytes()

    def test_matches_library_simulation(self, ou10_data, ou, ou_ys10):
        data = np.loadtxt(ou10_data, delimiter=",", skiprows=1)
        np.testing.assert_array_equal(data[:, 1:], ou_ys10)

    def test_unknown_model_exits_two(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            run(["simulate", "--model", "gbm", "--out", tmp_path / "x.csv"])
        assert e.value.code == 2

    def test_rejects_zero_observations(self, tmp_path, capsys):
        rc = run(["simulate", "--model", "ou1d", "--n", 0,
                  "--out", tmp_path / "x.csv"])
        assert rc == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_preset_row_count(self, tmp_path):
        # fhn ships with n=10 by default
        out = tmp_path / "fhn.csv"
        assert run(["simulate", "--model", "fhn", "--level", 4, "--out", out]) == 0
        _, rows, _ = read_rows(out)
        assert len(rows) == 10


class TestEstimate:
    def test_score_payload(self, tmp_path, ou_data):
        out = tmp_path / "score.json"
        assert run(["estimate", "score", "--model", "ou1d", "--data", ou_data,
                    "--out", out, *TINY]) == 0
        payload = json.loads(out.read_text())
        assert payload["kind"] == "score"
        assert len(payload["value"]) == 2 and len(payload["se"]) == 2
        assert payload["M"] == 2
        assert payload["model"] == "ou1d"
        assert payload["theta"] == [0.46, 0.38]
        assert payload["config"]["N"] == 8
        assert payload["diagnostics"]["euler_steps"] > 0
        assert (tmp_path / "score_manifest.json").exists()

    def test_hessian_with_oracle_block(self, tmp_path, ou_data):
        out = tmp_path / "hess.json"
        assert run(["estimate", "hessian", "--model", "ou1d", "--data", ou_data,
                    "--out", out, "--oracle", *TINY]) == 0
        payload = json.loads(out.read_text())
        assert payload["kind"] == "hessian"
        assert np.asarray(payload["value"]).shape == (2, 2)
        oracle = payload["oracle"]
        assert len(oracle["score"]) == 2
        assert np.asarray(oracle["observed_information"]).shape == (2, 2)

    def test_oracle_refused_for_fhn(self, tmp_path, capsys):
        data = tmp_path / "fhn.csv"
        run(["simulate", "--model", "fhn", "--n", 3, "--level", 5, "--out", data])
        rc = run(["estimate", "score", "--model", "fhn", "--data", data,
                  "--out", tmp_path / "x.json", "--oracle", *TINY])
        assert rc == 2
        assert "no exact Kalman reference" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path, capsys):
        rc = run(["estimate", "score", "--model", "ou1d",
                  "--data", tmp_path / "nope.csv", "--out", tmp_path / "x.json"])
        assert rc == 2
        assert "cannot read data file" in capsys.readouterr().err

    def test_repeatable_values(self, tmp_path, ou_data):
        outs = []
        for name in ("r1.json", "r2.json"):
            out = tmp_path / name
            run(["estimate", "score", "--model", "ou1d", "--data", ou_data,
                 "--out", out, "--seed", 4, *TINY])
            outs.append(json.loads(out.read_text()))
        assert outs[0]["value"] == outs[1]["value"]
        assert outs[0]["se"] == outs[1]["se"]

    def test_single_replicate_has_nan_se(self, tmp_path, ou_data):
        out = tmp_path / "m1.json"
        run(["estimate", "score", "--model", "ou1d", "--data", ou_data,
             "--out", out, "--N", 8, "--m-star", 1, "--M", 1, "--L-max", 1])
        payload = json.loads(out.read_text())
        assert all(math.isnan(v) for v in payload["se"])


class TestSweep:
    def test_variance_csv_and_figure(self, tmp_path, ou_data):
        out = tmp_path / "var.csv"
        assert run(["sweep", "variance", "--model", "ou1d", "--data", ou_data,
                    "--levels", "1,2", "--M", 3, "--out", out, *TINY[:6]]) == 0
        header, rows, footer = read_rows(out)
        assert header[:2] == ["level", "delta"]
        assert header[-4:] == ["euler_steps", "resample_draws", "cost", "seconds"]
        # p=2 bundle: 2 gradient + 3 outer + 3 hessian entries
        assert sum(c.startswith("var_") for c in header) == 8
        assert len(rows) == 2
        assert [r[0] for r in rows] == ["1.0", "2.0"]
        assert float(rows[0][1]) == 0.5
        fits = [f for f in footer if f.startswith("#fit:summed_variance,")]
        assert len(fits) == 1
        slope = float(fits[0].split(",")[1])
        assert math.isfinite(slope)
        assert (tmp_path / "var.png").exists()

    def test_bias_uses_kalman_reference(self, tmp_path, ou_data):
        out = tmp_path / "bias.csv"
        assert run(["sweep", "bias", "--model", "ou1d", "--data", ou_data,
                    "--levels", "1,2", "--M", 2, "--out", out, *TINY]) == 0
        header, rows, footer = read_rows(out)
        assert "# reference: kalman-exact" in footer
        # one fit per upper-triangle entry plus the summed curve
        assert sum(f.startswith("#fit:") for f in footer) == 4
        assert sum(c.startswith("abs_bias_") for c in header) == 3
        assert len(rows) == 2

    def test_mse_writes_cost_figure(self, tmp_path, ou_data):
        out = tmp_path / "mse.csv"
        assert run(["sweep", "mse", "--model", "ou1d", "--data", ou_data,
                    "--levels", "1,2", "--M", 2, "--out", out, *TINY]) == 0
        _, rows, footer = read_rows(out)
        assert len(rows) == 2
        assert any(f.startswith("#fit:summed_mse,") for f in footer)
        assert any(f.startswith("#fit:cost_vs_summed_mse,") for f in footer)
        assert (tmp_path / "mse.png").exists()
        assert (tmp_path / "mse_cost.png").exists()

    def test_no_plots_skips_figures(self, tmp_path, ou_data):
        out = tmp_path / "var.csv"
        assert run(["sweep", "variance", "--model", "ou1d", "--data", ou_data,
                    "--levels", "1", "--M", 2, "--no-plots", "--out", out,
                    *TINY[:6]]) == 0
        assert not list(tmp_path.glob("*.png"))

    def test_empty_level_list_from_config(self, tmp_path, ou_data, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"levels": []}))
        rc = run(["sweep", "variance", "--model", "ou1d", "--data", ou_data,
                  "--config", cfg, "--out", tmp_path / "x.csv"])
        assert rc == 2
        assert "empty level list" in capsys.readouterr().err

    def test_variance_rejects_level_zero(self, tmp_path, ou_data, capsys):
        rc = run(["sweep", "variance", "--model", "ou1d", "--data", ou_data,
                  "--levels", "0,1", "--out", tmp_path / "x.csv"])
        assert rc == 2
        assert "levels >= 1" in capsys.readouterr().err


class TestFit:
    def test_oracle_newton_trace(self, tmp_path, ou10_data):
        out = tmp_path / "fit.csv"
        assert run(["fit", "newton", "--model", "ou1d", "--data", ou10_data,
                    "--oracle", "--iters", 20, "--ridge", 0.0, "--out", out]) == 0
        header, rows, _ = read_rows(out)
        assert header == ["iteration", "theta1", "theta2", "score_norm", "rel_dist"]
        assert len(rows) == 21
        # preset start and the known stationary point of this dataset
        assert [float(v) for v in rows[0][1:3]] == [0.1, 0.1]
        final = np.array([float(v) for v in rows[-1][1:3]])
        np.testing.assert_allclose(final, [0.8467334929, 0.1926633096], atol=1e-6)
        assert rows[-1][3] == "nan"
        assert all(math.isfinite(float(r[4])) for r in rows)
        assert (tmp_path / "fit.png").exists()

    def test_estimated_sgd_runs(self, tmp_path, ou_data):
        out = tmp_path / "sgd.csv"
        assert run(["fit", "sgd", "--model", "ou1d", "--data", ou_data,
                    "--iters", 2, "--theta0", "0.3,0.3", "--no-plots",
                    "--out", out, *TINY]) == 0
        _, rows, _ = read_rows(out)
        assert len(rows) == 3
        assert [float(v) for v in rows[0][1:3]] == [0.3, 0.3]


class TestConfigResolution:
    def test_file_overrides_preset_and_flags_override_file(self, tmp_path, ou_data):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "ou1d", "M": 7, "N": 8,
                                   "m_star": 1, "L_max": 1}))
        out1 = tmp_path / "a.json"
        run(["estimate", "score", "--config", cfg, "--data", ou_data,
             "--out", out1])
        m1 = json.loads((tmp_path / "a_manifest.json").read_text())
        assert m1["config"]["M"] == 7
        assert m1["model"] == "ou1d"
        out2 = tmp_path / "b.json"
        run(["estimate", "score", "--config", cfg, "--data", ou_data,
             "--out", out2, "--M", 3])
        m2 = json.loads((tmp_path / "b_manifest.json").read_text())
        assert m2["config"]["M"] == 3

    def test_unknown_config_key_rejected(self, tmp_path, ou_data, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"model": "ou1d", "bogus": 1}))
        rc = run(["estimate", "score", "--config", cfg, "--data", ou_data,
                  "--out", tmp_path / "x.json"])
        assert rc == 2
        assert "unknown config file keys" in capsys.readouterr().err

    def test_missing_model_rejected(self, tmp_path, capsys):
        rc = run(["simulate", "--out", tmp_path / "x.csv"])
        assert rc == 2
        assert "no model given" in capsys.readouterr().err

    def test_paper_scale_tier(self):
        args = cli.build_parser().parse_args(
            ["estimate", "score", "--model", "ou1d", "--data", "d", "--out", "o",
             "--paper-scale"])
        cfg = cli.resolve_config(args)
        assert cfg["M"] == 10_000 and cfg["L_max"] == 8 and cfg["n"] == 500
        args = cli.build_parser().parse_args(
            ["estimate", "score", "--model", "ou1d", "--data", "d", "--out", "o"])
        desk = cli.resolve_config(args)
        assert desk["M"] == 1000 and desk["L_max"] == 5

    def test_workers_default_resolution(self):
        args = cli.build_parser().parse_args(
            ["simulate", "--model", "ou1d", "--out", "o"])
        cfg = cli.resolve_config(args)
        assert cfg["workers"] == (os.cpu_count() or 1)


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as e:
        run(["--version"])
    assert e.value.code == 0
    assert "podhess" in capsys.readouterr().out
