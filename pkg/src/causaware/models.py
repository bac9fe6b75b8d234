"""Least-squares and logistic regression fits used as the predictive models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateLabelsError, DimensionMismatchError, SingularDesignError

SINGULAR_CUTOFF = 1e-10
WEIGHT_NORM_CAP = 30.0
PERFECT_FIT_TOL = 1e-6


class SeparationWarning(UserWarning):
    """Logistic fit diverging because the classes are (quasi-)separable."""


@dataclass(frozen=True, eq=False)
class LinearWeights:
    beta_hat: np.ndarray


@dataclass(frozen=True, eq=False)
class LogisticWeights:
    intercept: float
    beta_hat: np.ndarray
    converged: bool
    iterations: int
    separated: bool = False
    loglik_trace: tuple = field(default=(), repr=False)


def _as_design(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    return x


def lstsq_qr(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Solve ``min ||design @ b - target||`` through a reduced QR factorization.

    ``target`` may be a vector or a matrix of right-hand sides.
    """
    n, k = design.shape
    if n < k:
        raise SingularDesignError(f"{n} rows cannot identify {k} coefficients")
    q, r = np.linalg.qr(design, mode="reduced")
    sv = np.linalg.svd(r, compute_uv=False)
    if sv.size == 0 or sv[-1] <= SINGULAR_CUTOFF * max(sv[0], 1.0):
        raise SingularDesignError(
            f"design is rank deficient (smallest singular value {sv[-1] if sv.size else 0:.3g})"
        )
    return solve_triangular(r, q.T @ target, lower=False)


def fit_ols(x, y) -> LinearWeights:
    """No-intercept least squares (data are assumed centered)."""
    x = _as_design(x)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatchError(f"x has {x.shape[0]} rows, y has {y.shape[0]}")
    if x.shape[0] <= x.shape[1]:
        raise SingularDesignError(f"need n > p, got n={x.shape[0]}, p={x.shape[1]}")
    beta = lstsq_qr(x, y)
    beta.flags.writeable = False
    return LinearWeights(beta)


def predict_linear(x, w: LinearWeights) -> np.ndarray:
    x = _as_design(x)
    if x.shape[1] != w.beta_hat.size:
        raise DimensionMismatchError(
            f"x has {x.shape[1]} columns, weights have {w.beta_hat.size}"
        )
    return x @ w.beta_hat


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _loglik(z, y, coef):
    eta = z @ coef
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logistic_score(x, y, intercept: float, beta) -> np.ndarray:
    """Gradient of the Bernoulli log-likelihood w.r.t. (intercept, beta)."""
    x = _as_design(x)
    z = np.column_stack([np.ones(x.shape[0]), x])
    coef = np.concatenate([[intercept], np.asarray(beta, dtype=float)])
    return z.T @ (np.asarray(y, dtype=float) - _sigmoid(z @ coef))


def fit_logistic(x, y, max_iter: int = 100, tol: float = 1e-8) -> LogisticWeights:
    """Logistic regression with intercept by iteratively reweighted least squares.

    Each Newton step is halved until the log-likelihood does not decrease.
    The data are treated as separated when the coefficient norm passes
    ``WEIGHT_NORM_CAP`` before the score reaches ``tol`` (coefficients are
    scaled back to the cap), or when the score only vanished because every
    fitted probability sits within ``PERFECT_FIT_TOL`` of its label. Either
    way ``separated`` is set and a SeparationWarning is emitted.
    """
    x = _as_design(x)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = x.shape
    if n != y.size:
        raise DimensionMismatchError(f"x has {n} rows, y has {y.size}")
    if not np.all((y == 0) | (y == 1)):
        raise DegenerateLabelsError("labels must be 0/1")
    if y.min() == y.max():
        raise DegenerateLabelsError("labels contain a single class")
    if n <= p + 1:
        raise SingularDesignError(f"need n > p + 1, got n={n}, p={p}")

    z = np.column_stack([np.ones(n), x])
    coef = np.zeros(p + 1)
    ll = _loglik(z, y, coef)
    trace = [ll]
    converged = separated = False
    it = 0
    while True:
        mu = _sigmoid(z @ coef)
        grad = z.T @ (y - mu)
        if np.max(np.abs(grad)) <= tol:
            converged = True
            break
        if np.linalg.norm(coef) > WEIGHT_NORM_CAP:
            separated = True
            break
        if it >= max_iter:
            break
        it += 1
        w = mu * (1.0 - mu)
        hess = z.T @ (z * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        slack = 1e-12 * (1.0 + abs(ll))
        for _ in range(60):
            cand = coef + step
            ll_new = _loglik(z, y, cand)
            if ll_new >= ll - slack:
                break
            step = step / 2.0
        else:
            break
        coef, ll = cand, max(ll_new, ll)
        trace.append(ll_new)

    if converged and np.max(np.abs(y - _sigmoid(z @ coef))) < PERFECT_FIT_TOL:
        # score vanished only because every point is already fitted perfectly
        separated = True
    if separated:
        norm = np.linalg.norm(coef)
        if norm > WEIGHT_NORM_CAP:
            coef = coef * (WEIGHT_NORM_CAP / norm)
        warnings.warn(
            "logistic fit did not converge before the coefficient norm exceeded "
            f"{WEIGHT_NORM_CAP}; data look separable",
            SeparationWarning,
            stacklevel=2,
        )
    beta = coef[1:].copy()
    beta.flags.writeable = False
    return LogisticWeights(
        intercept=float(coef[0]),
        beta_hat=beta,
        converged=converged,
        iterations=it,
        separated=separated,
        loglik_trace=tuple(trace),
    )


def predict_proba(x, w: LogisticWeights) -> np.ndarray:
    x = _as_design(x)
    if x.shape[1] != w.beta_hat.size:
        raise DimensionMismatchError(
            f"x has {x.shape[1]} columns, weights have {w.beta_hat.size}"
        )
    return _sigmoid(w.intercept + x @ w.beta_hat)
