import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causaware.adjust import AdjustmentModel, transform
from causaware.errors import DimensionMismatchError, UndefinedMetricError, ValidationError
from causaware.metrics import (
    TestMoments,
    analytic_expected_mse,
    analytic_feature_moments,
    auroc,
    mse,
    stability_error,
)
from causaware.models import LinearWeights
from causaware.scm import EnvironmentMoments, RegressionScmParams, simulate_regression


def auroc_pairs(labels, scores):
    """Exhaustive pair count; ties count one half."""
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == 0]
    wins = sum((p > q) + 0.5 * (p == q) for p, q in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


class TestMse:
    def test_identical(self):
        assert mse([1.0, 2.0], [1.0, 2.0]) == 0

    def test_arithmetic(self):
        assert mse([0, 0], [1, -1]) == 1

    def test_zero_prediction(self, rng):
        y = rng.normal(size=10)
        assert mse(y, np.zeros(10)) == pytest.approx(np.mean(y**2))

    def test_errors(self):
        with pytest.raises(DimensionMismatchError):
            mse([1, 2], [1])
        with pytest.raises(ValidationError):
            mse([], [])

    def test_permutation_invariant(self, rng):
        y, f = rng.normal(size=50), rng.normal(size=50)
        idx = rng.permutation(50)
        assert mse(y[idx], f[idx]) == pytest.approx(mse(y, f), rel=1e-15)


class TestAuroc:
    def test_separating(self):
        assert auroc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_all_ties(self):
        assert auroc([0, 1, 0, 1], [0.3] * 4) == 0.5

    def test_pair_count_example(self):
        assert auroc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75

    def test_one_class(self):
        with pytest.raises(UndefinedMetricError):
            auroc([1, 1, 1], [0.1, 0.2, 0.3])

    @settings(max_examples=60)
    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 6)), min_size=2, max_size=40)
           .filter(lambda v: len({l for l, _ in v}) == 2))
    def test_matches_pair_oracle(self, data):
        labels, scores = zip(*data)
        assert auroc(labels, scores) == pytest.approx(auroc_pairs(labels, scores), abs=1e-12)

    @settings(max_examples=60)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_invariance_and_complement(self, seed):
        r = np.random.default_rng(seed)
        labels = r.integers(0, 2, 30)
        labels[:2] = [0, 1]
        scores = np.round(r.normal(size=30), 1)
        a = auroc(labels, scores)
        assert auroc(labels, np.exp(3 * scores) + 7) == a
        assert auroc(1 - labels, scores) == pytest.approx(1 - a, abs=1e-12)


class TestStabilityError:
    def test_constant(self):
        assert stability_error(np.full((4, 9), 0.3)).stability_error == 0

    def test_single_replication(self):
        rep = stability_error([[1.0, 2.0, 3.0]])
        assert rep.stability_error == pytest.approx(np.std([1, 2, 3], ddof=1))

    def test_permuting_environments(self, rng):
        v = rng.normal(size=(5, 9))
        assert stability_error(v[:, rng.permutation(9)]).stability_error == pytest.approx(
            stability_error(v).stability_error, rel=1e-14
        )

    def test_per_env_summaries(self, rng):
        v = rng.normal(size=(6, 4))
        rep = stability_error(v)
        np.testing.assert_allclose(rep.per_env_mean, v.mean(0))
        np.testing.assert_allclose(rep.per_env_sd, v.std(0, ddof=1))
        np.testing.assert_allclose(rep.per_replication, v.std(1, ddof=1))

    def test_needs_two_envs(self):
        with pytest.raises(ValidationError):
            stability_error([[1.0], [2.0]])


def single_feature(beta_xc=0.0):
    return RegressionScmParams(beta_xy=[1.0], beta_xc=[[beta_xc]], beta_yc=[0.0], rho=0.0, sigma2_x=1.0)


class TestAnalytic:
    def test_adjusted_single_feature_moments(self):
        env = TestMoments(var_y=2, var_c=[1], cov_cc=[[1]], cov_yc=[0.5])
        v, c = analytic_feature_moments(single_feature(0.7), env, adjusted=True)
        assert v[0, 0] == 3 and c[0] == 2

    def test_no_confounder_path_equal(self):
        env = TestMoments(var_y=1.3, var_c=[2], cov_cc=[[2]], cov_yc=[0.9])
        a = analytic_feature_moments(single_feature(0.0), env, adjusted=False)
        b = analytic_feature_moments(single_feature(0.0), env, adjusted=True)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_adjusted_ignores_confounder_moments(self):
        pr = single_feature(0.7)
        e1 = TestMoments(var_y=1, var_c=[1], cov_cc=[[1]], cov_yc=[0.8])
        e2 = TestMoments(var_y=1, var_c=[3], cov_cc=[[3]], cov_yc=[-0.8])
        w = LinearWeights(np.array([0.4]))
        assert analytic_expected_mse(pr, e1, w, True) == analytic_expected_mse(pr, e2, w, True)
        assert analytic_expected_mse(pr, e1, w, False) != analytic_expected_mse(pr, e2, w, False)

    def test_toy_expected_mse(self):
        env = TestMoments(var_y=1, var_c=[1], cov_cc=[[1]], cov_yc=[0.8])
        w = LinearWeights(np.array([0.5]))
        assert analytic_expected_mse(single_feature(0.6), env, w, True) == pytest.approx(0.5, abs=1e-15)

    def test_zero_weights_give_var_y(self):
        env = TestMoments(var_y=1.75, var_c=[1], cov_cc=[[1]], cov_yc=[0.2])
        w = LinearWeights(np.zeros(1))
        assert analytic_expected_mse(single_feature(0.6), env, w, False) == 1.75

    def test_unadjusted_single_feature_by_hand(self):
        # Var X = 1 + b^2 Var C + Var Y + 2 b Cov, Cov(X, Y) = Var Y + b Cov
        b, vc, cy, vy = 0.6, 2.0, -0.4, 1.5
        env = TestMoments(var_y=vy, var_c=[vc], cov_cc=[[vc]], cov_yc=[cy])
        v, c = analytic_feature_moments(single_feature(b), env, adjusted=False)
        assert v[0, 0] == pytest.approx(1 + b * b * vc + vy + 2 * b * cy)
        assert c[0] == pytest.approx(vy + b * cy)

    @pytest.mark.parametrize("adjusted", [True, False])
    def test_monte_carlo_oracle(self, rng, adjusted):
        pr = RegressionScmParams(
            beta_xy=[0.7, -0.4], beta_xc=[[0.9], [0.5]], beta_yc=[0.3], rho=0.35
        )
        env = EnvironmentMoments(var_c=2.0, cov_cy=-0.4, var_y=1.0)
        w = LinearWeights(np.array([0.6, -0.3]))
        d = simulate_regression(pr, env, 200_000, rng)
        x = transform(d.x, d.c, AdjustmentModel(pr.beta_xc, pr.beta_xy, 0)) if adjusted else d.x
        empirical = mse(d.y, x @ w.beta_hat)
        analytic = analytic_expected_mse(pr, TestMoments.from_environment(env), w, adjusted)
        assert abs(empirical - analytic) / analytic < 0.01

    def test_nonnegative_for_valid_inputs(self, rng):
        for _ in range(200):
            pr = RegressionScmParams(rng.uniform(-1, 1, 4), rng.uniform(-1, 1, (4, 1)), [0.0], rng.uniform(-0.5, 0.5))
            vc = rng.uniform(0.5, 3)
            env = TestMoments(var_y=1, var_c=[vc], cov_cc=[[vc]], cov_yc=[rng.uniform(-0.7, 0.7)])
            w = LinearWeights(rng.normal(size=4) * 3)
            for adj in (True, False):
                assert analytic_expected_mse(pr, env, w, adj) >= 0

    def test_invalid_env(self):
        with pytest.raises(ValidationError):
            TestMoments(var_y=1, var_c=[1], cov_cc=[[1]], cov_yc=[2.0])
        with pytest.raises(DimensionMismatchError):
            analytic_expected_mse(single_feature(), TestMoments(1, [1], [[1]], [0]), LinearWeights(np.ones(3)), True)
