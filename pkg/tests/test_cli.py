import json

import numpy as np
import pandas as pd
import pytest

from causaware.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestRun:
    def test_builtin_shape_and_rerun(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli(capsys, "run", "--builtin", "regr_exp1", "--reps", 10, "--out", a)[0] == EXIT_OK
        assert run_cli(capsys, "run", "--builtin", "regr_exp1", "--reps", 10, "--out", b, "--threads", 3)[0] == EXIT_OK
        res = pd.read_csv(a / "results.csv")
        assert list(res.columns) == ["replication", "strategy", "env", "metric", "value"]
        assert len(res) == 10 * 3 * 9
        ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
        assert ma["outputs"] == mb["outputs"]
        assert ma["config"]["replications"] == 10 and ma["master_seed"] == 0

    def test_rerun_from_manifest(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli(capsys, "run", "--builtin", "regr_exp2", "--reps", 3, "--seed", 9, "--out", a)
        assert run_cli(capsys, "run", "--manifest", a / "manifest.json", "--out", b)[0] == EXIT_OK
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()

    def test_classification_auroc(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "run", "--builtin", "class_exp1", "--reps", 2, "--out", tmp_path)
        assert code == EXIT_OK
        res = pd.read_csv(tmp_path / "results.csv")
        assert set(res.metric) == {"auroc"} and res.value.between(0, 1).all()
        assert "stability_error" in out

    def test_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("builtin: regr_exp1\nreplications: 2\nstrategies: [ca]\n")
        assert run_cli(capsys, "run", "--config", cfg, "--out", tmp_path / "o")[0] == EXIT_OK
        assert len(pd.read_csv(tmp_path / "o" / "results.csv")) == 18

    def test_bad_config_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("builtin: regr_exp1\nreplicatons: 2\n")
        code, _, err = run_cli(capsys, "run", "--config", cfg, "--out", tmp_path / "o")
        assert code == EXIT_VALIDATION and "replicatons" in err and "line 2" in err

    def test_missing_config_exit_3(self, tmp_path, capsys):
        assert run_cli(capsys, "run", "--config", tmp_path / "none.yaml")[0] == EXIT_RUNTIME

    def test_usage_errors_exit_2(self, capsys):
        for argv in (["run"], ["run", "--builtin", "nope"], ["frobnicate"],
                     ["run", "--builtin", "regr_exp1", "--threads", "0"]):
            with pytest.raises(SystemExit) as info:
                main(argv)
            assert info.value.code == EXIT_VALIDATION
        capsys.readouterr()


class TestAnalytic:
    @pytest.fixture
    def params(self, tmp_path):
        p = tmp_path / "p.yaml"
        p.write_text("beta_xy: [1.0]\nbeta_xc: [[0.6]]\nrho: 0.0\nsigma2_x: 1.0\n")
        return p

    def test_adjusted(self, params, capsys):
        code, out, _ = run_cli(capsys, "analytic", "--params", params, "--var-y", 1,
                               "--cov-yc", 0.8, "--weights", 0.5, "--adjusted")
        assert code == EXIT_OK and float(out) == pytest.approx(0.5)

    def test_unadjusted(self, params, capsys):
        # 1 + 0.25*(1 + 0.36 + 1 - 0.96) - 2*0.5*(1 - 0.48) = 0.83
        code, out, _ = run_cli(capsys, "analytic", "--params", params, "--var-y", 1,
                               "--cov-yc=-0.8", "--weights", 0.5)
        assert code == EXIT_OK and float(out) == pytest.approx(0.83, abs=1e-12)

    def test_weight_dimension_exit_2(self, params, capsys):
        code, _, err = run_cli(capsys, "analytic", "--params", params, "--var-y", 1, "--weights", "1,2")
        assert code == EXIT_VALIDATION and err

    def test_missing_key_exit_2(self, tmp_path, capsys):
        p = tmp_path / "p.yaml"
        p.write_text("rho: 0.1\n")
        assert run_cli(capsys, "analytic", "--params", p, "--var-y", 1, "--weights", 1)[0] == EXIT_VALIDATION


def synthetic_export(rng, n, with_label=True):
    c = rng.normal(size=(n, 2))
    y = 0.5 * c[:, 0] + rng.normal(size=n)
    x = np.outer(y, [1.0, -0.5, 0.2]) + c @ np.array([[0.8, 0.0, -0.3], [0.1, 0.6, 0.0]]) + rng.normal(size=(n, 3))
    frame = pd.DataFrame(x, columns=["f1", "f2", "f3"]).assign(age=c[:, 0], sex=c[:, 1])
    if with_label:
        frame["label"] = y
    return frame


class TestAdjust:
    def test_round_trip(self, tmp_path, capsys, rng):
        train, test = synthetic_export(rng, 500), synthetic_export(rng, 200, with_label=False)
        train.to_csv(tmp_path / "tr.csv", index=False)
        test.to_csv(tmp_path / "ts.csv", index=False)
        out = tmp_path / "out"
        code, _, _ = run_cli(capsys, "adjust", tmp_path / "tr.csv", tmp_path / "ts.csv",
                             "--confounders", "age,sex", "--label", "label", "--out", out)
        assert code == EXIT_OK
        model = json.loads((out / "adjustment_model.json").read_text())
        assert model["features"] == ["f1", "f2", "f3"] and model["confounders"] == ["age", "sex"]
        adj_tr = pd.read_csv(out / "train_adjusted.csv", float_precision="round_trip")
        adj_ts = pd.read_csv(out / "test_adjusted.csv", float_precision="round_trip")
        assert list(adj_ts.columns) == list(test.columns)
        np.testing.assert_array_equal(adj_ts[["age", "sex"]], test[["age", "sex"]])
        # training residuals are orthogonal to the design (Y, C)
        b_xy = np.asarray(model["b_xy_hat"]).reshape(-1)
        resid = adj_tr[["f1", "f2", "f3"]].to_numpy() - np.outer(train.label, b_xy)
        design = train[["label", "age", "sex"]].to_numpy()
        assert np.abs(design.T @ resid).max() <= 1e-10 * len(train) * 10
        # the same transform on test
        b_xc = np.asarray(model["b_xc_hat"])
        expect = test[["f1", "f2", "f3"]].to_numpy() - test[["age", "sex"]].to_numpy() @ b_xc.T
        np.testing.assert_allclose(adj_ts[["f1", "f2", "f3"]], expect, atol=1e-12)

    def test_saved_model_reused(self, tmp_path, capsys, rng):
        train = synthetic_export(rng, 300)
        train.to_csv(tmp_path / "tr.csv", index=False)
        run_cli(capsys, "adjust", tmp_path / "tr.csv", tmp_path / "tr.csv",
                "--confounders", "age,sex", "--label", "label", "--out", tmp_path / "a")
        run_cli(capsys, "adjust", tmp_path / "tr.csv", tmp_path / "tr.csv", "--confounders", "age,sex",
                "--label", "label", "--out", tmp_path / "b", "--model", tmp_path / "a" / "adjustment_model.json")
        assert (tmp_path / "a" / "test_adjusted.csv").read_text() == (tmp_path / "b" / "test_adjusted.csv").read_text()

    def test_unconfounded_features_nearly_unchanged(self, tmp_path, capsys, rng):
        n = 20000
        y = rng.normal(size=n)
        frame = pd.DataFrame({"f": 2 * y + rng.normal(size=n), "c": rng.normal(size=n), "y": y})
        frame.to_csv(tmp_path / "d.csv", index=False)
        run_cli(capsys, "adjust", tmp_path / "d.csv", tmp_path / "d.csv", "--confounders", "c",
                "--label", "y", "--out", tmp_path / "o")
        model = json.loads((tmp_path / "o" / "adjustment_model.json").read_text())
        assert abs(np.asarray(model["b_xc_hat"]).item()) < 0.05

    def test_missing_column_exit_2(self, tmp_path, capsys, rng):
        synthetic_export(rng, 50).to_csv(tmp_path / "tr.csv", index=False)
        synthetic_export(rng, 50).drop(columns="sex").to_csv(tmp_path / "ts.csv", index=False)
        code, _, err = run_cli(capsys, "adjust", tmp_path / "tr.csv", tmp_path / "ts.csv",
                               "--confounders", "age,sex", "--label", "label", "--out", tmp_path / "o")
        assert code == EXIT_VALIDATION and "sex" in err


class TestMoments:
    def test_table_entry(self, capsys):
        code, out, _ = run_cli(capsys, "moments", 0.25, 0.05, 0.45, 0.25)
        assert code == EXIT_OK
        assert out.split() == ["var_c", "0.2100", "var_y", "0.2100", "cov", "0.0400", "cor", "0.1905"]

    def test_degenerate(self, capsys):
        _, out, _ = run_cli(capsys, "moments", 0.5, 0.5, 0.0, 0.0)
        assert "undefined" in out

    def test_bad_sum_exit_2(self, capsys):
        assert run_cli(capsys, "moments", 0.5, 0.5, 0.5, 0.5)[0] == EXIT_VALIDATION
