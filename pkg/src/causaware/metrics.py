"""Performance metrics, stability summaries and the closed-form expected MSE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionMismatchError, UndefinedMetricError, ValidationError
from .models import LinearWeights
from .scm import RegressionScmParams


def mse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=float).reshape(-1)
    if y_true.size != y_pred.size:
        raise DimensionMismatchError(f"lengths differ: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise ValidationError("mse of an empty sample is undefined")
    return float(np.mean((y_true - y_pred) ** 2))


def auroc(labels, scores) -> float:
    """Area under the ROC curve as a Mann-Whitney statistic (ties count 1/2)."""
    labels = np.asarray(labels).reshape(-1)
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if labels.size != scores.size:
        raise DimensionMismatchError(f"lengths differ: {labels.size} vs {scores.size}")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes among the labels")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True, eq=False)
class StabilityReport:
    per_env_mean: np.ndarray
    per_env_sd: np.ndarray
    stability_error: float
    per_replication: np.ndarray


def stability_error(metric_values) -> StabilityReport:
    """Summarize a (replications x environments) table of one metric.

    The stability error of a replication is the sample sd of its metric
    across environments; the report's ``stability_error`` is the mean of
    those over replications.
    """
    values = np.asarray(metric_values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(1, -1)
    reps, envs = values.shape
    if envs < 2:
        raise ValidationError("stability needs at least 2 environments")
    if reps < 1:
        raise ValidationError("stability needs at least 1 replication")
    per_rep = values.std(axis=1, ddof=1)
    per_env_sd = values.std(axis=0, ddof=1) if reps > 1 else np.full(envs, np.nan)
    return StabilityReport(
        per_env_mean=values.mean(axis=0),
        per_env_sd=per_env_sd,
        stability_error=float(per_rep.mean()),
        per_replication=per_rep,
    )


@dataclass(frozen=True, eq=False)
class TestMoments:
    """Second moments of (C, Y) in one test environment."""

    __test__ = False  # keep pytest from collecting this class

    var_y: float
    var_c: np.ndarray
    cov_cc: np.ndarray
    cov_yc: np.ndarray

    def __post_init__(self):
        var_c = np.array(self.var_c, dtype=float).reshape(-1)
        cov_yc = np.array(self.cov_yc, dtype=float).reshape(-1)
        cov_cc = np.array(self.cov_cc, dtype=float).reshape(var_c.size, var_c.size)
        if cov_yc.size != var_c.size:
            raise DimensionMismatchError("cov_yc and var_c lengths differ")
        if not self.var_y > 0:
            raise ValidationError(f"var_y must be > 0, got {self.var_y}")
        if not np.allclose(cov_cc, cov_cc.T) or not np.allclose(np.diag(cov_cc), var_c):
            raise ValidationError("cov_cc must be symmetric with diagonal var_c")
        joint = np.block([[cov_cc, cov_yc[:, None]], [cov_yc[None, :], np.array([[self.var_y]])]])
        if np.linalg.eigvalsh(joint)[0] < -1e-12 * max(1.0, np.abs(joint).max()):
            raise ValidationError("joint (C, Y) covariance is not positive semidefinite")
        object.__setattr__(self, "var_y", float(self.var_y))
        object.__setattr__(self, "var_c", var_c)
        object.__setattr__(self, "cov_cc", cov_cc)
        object.__setattr__(self, "cov_yc", cov_yc)

    @classmethod
    def from_environment(cls, env, m: int = 1) -> "TestMoments":
        """Regression environment with ``m`` uncorrelated confounders of equal moments."""
        return cls(
            var_y=env.var_y,
            var_c=np.full(m, env.var_c),
            cov_cc=env.var_c * np.eye(m),
            cov_yc=np.full(m, env.cov_cy),
        )


def analytic_feature_moments(
    params: RegressionScmParams, env: TestMoments, adjusted: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Population Cov(X) and Cov(X, Y) of the test features.

    With ``adjusted=True`` the features are X* = X - b_xc C computed with the
    true coefficients, whose moments involve only Var(Y) and the feature
    noise covariance; the confounder fields of ``env`` are not read at all.
    """
    if env.var_c.size != params.m:
        raise DimensionMismatchError(
            f"environment has {env.var_c.size} confounders, params have {params.m}"
        )
    b_y = params.beta_xy
    v = np.outer(b_y, b_y) * env.var_y + params.feature_noise_cov()
    c = b_y * env.var_y
    if not adjusted:
        b_c = params.beta_xc
        via_c = b_c @ env.cov_yc  # sum_i b_xc[j, i] Cov(Y, C_i)
        v = v + np.outer(b_y, via_c) + np.outer(via_c, b_y) + b_c @ env.cov_cc @ b_c.T
        c = c + via_c
    return v, c


def analytic_expected_mse(
    params: RegressionScmParams,
    env: TestMoments,
    weights: LinearWeights,
    adjusted: bool,
) -> float:
    """E[(Y - X b)^2] = Var(Y) + b'Vb - 2 b'c for fixed trained weights b."""
    b = np.asarray(weights.beta_hat, dtype=float)
    if b.size != params.p:
        raise DimensionMismatchError(f"weights have {b.size} entries, params have {params.p}")
    v, c = analytic_feature_moments(params, env, adjusted)
    return float(env.var_y + b @ v @ b - 2.0 * b @ c)
