"""Causality-aware confounding adjustment for anticausal prediction.

Deconfounds training *and* unlabeled test features by subtracting fitted
confounder contributions, and ships the synthetic stability experiments
that compare it with train-only adjustment, matching and IPW resampling.
"""

from .data import Dataset, Task
from .scm import (
    ClassificationScmParams,
    EnvironmentMoments,
    ErrorMoments,
    RegressionScmParams,
    ar1_covariance,
    draw_params,
    sample_mvn,
    simulate_classification_population,
    simulate_regression,
    solve_error_moments,
)
from .selection import (
    BernoulliMoments,
    CellProbs,
    bernoulli_moments,
    biased_subsample,
    ipw_oversample,
    match_undersample,
    rebalance_to_target,
)
from .adjust import AdjustmentModel, Strategy, fit_adjustment, prepare, transform
from .models import (
    LinearWeights,
    LogisticWeights,
    fit_logistic,
    fit_ols,
    predict_linear,
    predict_proba,
)
from .metrics import (
    StabilityReport,
    TestMoments,
    analytic_expected_mse,
    analytic_feature_moments,
    auroc,
    mse,
    stability_error,
)
from .config import ExperimentConfig, builtin_config, load_config
from .harness import run_experiment, run_replication

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
