"""Linear structural causal models for anticausal tasks.

Regression model (centered, no intercepts)::

    C   = U_C
    Y   = beta_yc . C + U_Y
    X_j = beta_xy[j] Y + beta_xc[j] . C + U_Xj

with (U_C, U_Y) jointly Gaussian and U_X ~ N(0, sigma2_x * AR1(rho)). The
(U_C, U_Y) covariance is solved from the target second moments of (C, Y),
which is how a selection-biased environment is simulated.

Classification model: C ~ Bernoulli(1/2) per confounder,
Y ~ Bernoulli(sigmoid(beta_yc . C)), X as above with 0/1-coded C and Y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Task
from .errors import (
    InfeasibleConfigurationError,
    InfeasibleMomentsError,
    InvalidCovarianceError,
    InvalidParameterError,
    ValidationError,
)
from .selection import CellProbs

MAX_DRAW_ATTEMPTS = 10_000
_PSD_TOL = 1e-12


def _vector(a, name):
    a = np.array(a, dtype=float).reshape(-1)
    if a.size == 0:
        raise InvalidParameterError(f"{name} must be non-empty")
    if not np.all(np.isfinite(a)):
        raise InvalidParameterError(f"{name} has non-finite entries")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RegressionScmParams:
    beta_xy: np.ndarray
    beta_xc: np.ndarray
    beta_yc: np.ndarray
    rho: float
    sigma2_x: float = 1.0

    def __post_init__(self):
        beta_xy = _vector(self.beta_xy, "beta_xy")
        beta_yc = _vector(self.beta_yc, "beta_yc")
        beta_xc = np.array(self.beta_xc, dtype=float)
        if beta_xc.ndim < 2:
            beta_xc = beta_xc.reshape(beta_xy.size, -1)
        if beta_xc.shape != (beta_xy.size, beta_yc.size):
            raise InvalidParameterError(
                f"beta_xc must be {beta_xy.size}x{beta_yc.size}, got {beta_xc.shape}"
            )
        if not np.all(np.isfinite(beta_xc)):
            raise InvalidParameterError("beta_xc has non-finite entries")
        beta_xc.flags.writeable = False
        if not (np.isfinite(self.rho) and abs(self.rho) < 1):
            raise InvalidParameterError(f"|rho| must be < 1, got {self.rho}")
        if not (np.isfinite(self.sigma2_x) and self.sigma2_x > 0):
            raise InvalidParameterError(f"sigma2_x must be > 0, got {self.sigma2_x}")
        object.__setattr__(self, "beta_xy", beta_xy)
        object.__setattr__(self, "beta_xc", beta_xc)
        object.__setattr__(self, "beta_yc", beta_yc)
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "sigma2_x", float(self.sigma2_x))

    @property
    def p(self) -> int:
        return self.beta_xy.size

    @property
    def m(self) -> int:
        return self.beta_yc.size

    def feature_noise_cov(self) -> np.ndarray:
        return self.sigma2_x * ar1_covariance(self.rho, self.p)

    def to_dict(self) -> dict:
        return {
            "beta_xy": self.beta_xy.tolist(),
            "beta_xc": self.beta_xc.tolist(),
            "beta_yc": self.beta_yc.tolist(),
            "rho": self.rho,
            "sigma2_x": self.sigma2_x,
        }

    @classmethod
    def from_dict(cls, d: dict):
        return cls(
            beta_xy=d["beta_xy"],
            beta_xc=d["beta_xc"],
            beta_yc=d["beta_yc"],
            rho=d["rho"],
            sigma2_x=d.get("sigma2_x", 1.0),
        )


class ClassificationScmParams(RegressionScmParams):
    """Same coefficients; ``beta_yc`` enters a logistic link for Y."""


@dataclass(frozen=True)
class EnvironmentMoments:
    """One train/test environment.

    Regression environments set ``var_c``, ``cov_cy``, ``var_y``;
    classification environments set ``cell_probs``. Exactly one variant.
    """

    var_c: float | None = None
    cov_cy: float | None = None
    var_y: float | None = None
    cell_probs: CellProbs | None = None

    def __post_init__(self):
        regr = (self.var_c, self.cov_cy, self.var_y)
        n_set = sum(v is not None for v in regr)
        if self.cell_probs is not None:
            if n_set:
                raise ValidationError("environment sets both moments and cell_probs")
            return
        if n_set != 3:
            raise ValidationError("regression environment needs var_c, cov_cy and var_y")
        if not self.var_c > 0 or not self.var_y > 0:
            raise ValidationError(
                f"var_c and var_y must be > 0, got var_c={self.var_c}, var_y={self.var_y}"
            )

    @property
    def is_regression(self) -> bool:
        return self.cell_probs is None

    def to_dict(self) -> dict:
        if self.is_regression:
            return {"var_c": self.var_c, "cov_cy": self.cov_cy, "var_y": self.var_y}
        cp = self.cell_probs
        return {"cell_probs": {"p00": cp.p00, "p01": cp.p01, "p10": cp.p10, "p11": cp.p11}}


@dataclass(frozen=True)
class ErrorMoments:
    phi_cc: float
    phi_cy: float
    phi_yy: float


def ar1_covariance(rho: float, p: int) -> np.ndarray:
    """AR(1) correlation matrix with entries ``rho**|i-j|``."""
    if not abs(rho) < 1:
        raise InvalidParameterError(f"|rho| must be < 1, got {rho}")
    if p < 1:
        raise InvalidParameterError(f"p must be >= 1, got {p}")
    lag = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return np.power(float(rho), lag)


def error_covariance(var_c, cov_cy, var_y, beta_yc) -> np.ndarray:
    """Covariance of (U_C1..U_Cm, U_Y) giving the target (C, Y) moments.

    The confounders get variance ``var_c`` each, are mutually uncorrelated,
    and each has covariance ``cov_cy`` with Y. Since (U_C, U_Y) = A (C, Y)
    with A = [[I, 0], [-beta_yc', 1]], the answer is A Sigma A'.
    """
    beta_yc = np.atleast_1d(np.asarray(beta_yc, dtype=float))
    m = beta_yc.size
    sigma = np.empty((m + 1, m + 1))
    sigma[:m, :m] = var_c * np.eye(m)
    sigma[:m, m] = sigma[m, :m] = cov_cy
    sigma[m, m] = var_y
    a = np.eye(m + 1)
    a[m, :m] = -beta_yc
    return a @ sigma @ a.T


def solve_error_moments(var_c: float, cov_cy: float, var_y: float, beta_yc: float) -> ErrorMoments:
    """Solve (phi_cc, phi_cy, phi_yy) so that C = U_C, Y = beta_yc C + U_Y hits the targets.

    Raises
    ------
    InfeasibleMomentsError
        If the implied (U_C, U_Y) covariance is not a valid covariance.
    """
    if not var_c > 0 or not var_y > 0:
        raise ValidationError(f"var_c and var_y must be > 0, got {var_c}, {var_y}")
    phi_cc = var_c
    phi_cy = cov_cy - beta_yc * var_c
    phi_yy = var_y + beta_yc**2 * var_c - 2 * beta_yc * cov_cy
    det = phi_cc * phi_yy - phi_cy**2
    if phi_yy <= 0 or det < -_PSD_TOL * max(1.0, phi_cc * phi_yy):
        raise InfeasibleMomentsError(
            "target moments (var_c={}, cov_cy={}, var_y={}) are infeasible for "
            "beta_yc={}: phi_cc={:.6g}, phi_cy={:.6g}, phi_yy={:.6g} is not a "
            "valid covariance (phi_cc*phi_yy - phi_cy^2 = {:.6g})".format(
                var_c, cov_cy, var_y, beta_yc, phi_cc, phi_cy, phi_yy, det
            ),
            phi_cc=phi_cc,
            phi_cy=phi_cy,
            phi_yy=phi_yy,
        )
    return ErrorMoments(phi_cc, phi_cy, phi_yy)


def _check_feasible(env: EnvironmentMoments, beta_yc: np.ndarray) -> np.ndarray:
    if beta_yc.size == 1:
        e = solve_error_moments(env.var_c, env.cov_cy, env.var_y, float(beta_yc[0]))
        return np.array([[e.phi_cc, e.phi_cy], [e.phi_cy, e.phi_yy]])
    cov = error_covariance(env.var_c, env.cov_cy, env.var_y, beta_yc)
    if np.linalg.eigvalsh(cov)[0] < -_PSD_TOL * max(1.0, np.abs(cov).max()):
        raise InfeasibleMomentsError(
            f"target moments {env.to_dict()} are infeasible for {beta_yc.size} confounders"
        )
    return cov


def pivoted_cholesky(cov: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Lower-triangular-up-to-permutation factor ``L`` with ``L @ L.T == cov``.

    Handles rank-deficient PSD matrices; columns for zero-variance directions
    are exactly zero.
    """
    a = np.array(cov, dtype=float)
    k = a.shape[0]
    scale = max(1.0, np.abs(a).max()) if a.size else 1.0
    perm = np.arange(k)
    factor = np.zeros((k, k))
    diag = np.diag(a).copy()
    for j in range(k):
        q = j + int(np.argmax(diag[perm[j:]]))
        perm[[j, q]] = perm[[q, j]]
        pivot = diag[perm[j]]
        if pivot <= tol * scale:
            if np.any(diag[perm[j:]] < -tol * scale):
                raise InvalidCovarianceError("covariance is not positive semidefinite")
            break
        col = (a[perm[j:], perm[j]] - factor[perm[j:], :j] @ factor[perm[j], :j]) / np.sqrt(pivot)
        factor[perm[j:], j] = col
        diag[perm[j:]] -= col**2
    residual = a - factor @ factor.T
    if np.abs(residual).max(initial=0.0) > 1e-8 * scale:
        raise InvalidCovarianceError("covariance is not positive semidefinite")
    return factor


def sample_mvn(cov, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` zero-mean Gaussian rows with covariance ``cov``."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, atol=1e-12):
        raise InvalidCovarianceError("covariance must be a symmetric square matrix")
    if not np.all(np.isfinite(cov)):
        raise InvalidCovarianceError("covariance has non-finite entries")
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        factor = pivoted_cholesky(cov)
    z = rng.standard_normal((n, cov.shape[0]))
    return z @ factor.T


def _features(params: RegressionScmParams, c: np.ndarray, y: np.ndarray, rng) -> np.ndarray:
    u_x = sample_mvn(params.feature_noise_cov(), y.shape[0], rng)
    return np.outer(y, params.beta_xy) + c @ params.beta_xc.T + u_x


def simulate_regression(
    params: RegressionScmParams, env: EnvironmentMoments, n: int, rng: np.random.Generator
) -> Dataset:
    if not env.is_regression:
        raise ValidationError("simulate_regression needs a regression environment")
    if n < 0:
        raise ValidationError(f"n must be >= 0, got {n}")
    cov = _check_feasible(env, params.beta_yc)
    u = sample_mvn(cov, n, rng)
    c = u[:, : params.m]
    y = c @ params.beta_yc + u[:, params.m]
    x = _features(params, c, y, rng)
    return Dataset(x, c, y, Task.REGRESSION)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def simulate_classification_population(
    params: ClassificationScmParams, n: int, rng: np.random.Generator
) -> Dataset:
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    c = (rng.random((n, params.m)) < 0.5).astype(float)
    prob = sigmoid(c @ params.beta_yc)
    y = (rng.random(n) < prob).astype(float)
    x = _features(params, c, y, rng)
    return Dataset(x, c, y, Task.CLASSIFICATION)


def draw_params(
    kind: Task | str,
    p: int,
    m: int,
    env_targets: list[EnvironmentMoments] = (),
    rng: np.random.Generator | None = None,
):
    """Draw every path coefficient from U(-1, 1) and rho from U(-0.5, 0.5).

    Regression draws are rejected until every environment in ``env_targets``
    is feasible under the drawn ``beta_yc``, so one draw serves the training
    set and all test sets.
    """
    kind = Task(kind)
    if rng is None:
        raise ValidationError("draw_params needs an explicit random stream")
    if p < 1 or m < 1:
        raise InvalidParameterError(f"need p >= 1 and m >= 1, got p={p}, m={m}")
    cls = RegressionScmParams if kind is Task.REGRESSION else ClassificationScmParams
    for _ in range(MAX_DRAW_ATTEMPTS):
        beta_xy = rng.uniform(-1, 1, p)
        beta_xc = rng.uniform(-1, 1, (p, m))
        beta_yc = rng.uniform(-1, 1, m)
        rho = rng.uniform(-0.5, 0.5)
        params = cls(beta_xy, beta_xc, beta_yc, rho)
        if kind is Task.CLASSIFICATION:
            return params
        try:
            for env in env_targets:
                _check_feasible(env, params.beta_yc)
        except InfeasibleMomentsError:
            continue
        return params
    raise InfeasibleConfigurationError(
        f"no feasible parameter draw in {MAX_DRAW_ATTEMPTS} attempts; "
        "check that every environment's (C, Y) moments form a valid covariance"
    )
