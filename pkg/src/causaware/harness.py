"""Replicated stability experiments: generate -> select -> adjust -> fit -> score.

Random streams
--------------
Every random draw comes from ``seed_for(master_seed, rep, stage, sub)``,
a PCG64 generator seeded by ``SeedSequence([master_seed, rep, stage, sub])``.
Stages are fixed integers (see ``Stage``) and ``sub`` is the test
environment number or the strategy's position in ``Strategy``. No stream
is shared between replications or between stages, so any row can be
regenerated from (master_seed, rep, strategy, env) and the output does not
depend on execution order or thread count.
"""

from __future__ import annotations

import enum
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adjust import Strategy, prepare
from .config import ExperimentConfig
from .data import Dataset, Task
from .errors import CausawareError
from .metrics import StabilityReport, auroc, mse, stability_error
from .models import SeparationWarning, fit_logistic, fit_ols, predict_linear, predict_proba
from .scm import draw_params, simulate_classification_population, simulate_regression
from .selection import biased_subsample

log = logging.getLogger(__name__)

_STRATEGY_INDEX = {s: i for i, s in enumerate(Strategy)}


class Stage(enum.IntEnum):
    PARAMS = 0
    TRAIN_GENERATE = 1
    TRAIN_SELECT = 2
    TEST_GENERATE = 3
    TEST_SELECT = 4
    STRATEGY = 5


def seed_for(master_seed: int, rep: int, stage: int, sub: int = 0) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([master_seed, rep, int(stage), sub]))
    )


@dataclass(frozen=True)
class ResultRow:
    replication: int
    strategy: Strategy
    env: int
    metric: str
    value: float


@dataclass(frozen=True)
class FailureRecord:
    replication: int
    strategy: Strategy
    error: str


@dataclass(frozen=True)
class SummaryCell:
    strategy: Strategy
    env: int
    mean: float
    sd: float
    n_ok: int
    n_failed: int


@dataclass
class Summary:
    cells: list[SummaryCell]
    stability: dict[Strategy, StabilityReport]
    failures: list[FailureRecord] = field(default_factory=list)
    metric: str = "mse"

    def cell(self, strategy: Strategy, env: int) -> SummaryCell:
        for c in self.cells:
            if c.strategy is strategy and c.env == env:
                return c
        raise KeyError((strategy, env))


def generate_datasets(config: ExperimentConfig, params, rep: int) -> tuple[Dataset, list[Dataset]]:
    """Training set and every test set of one replication, all from the same ``params``."""
    seed = config.master_seed
    if config.task is Task.REGRESSION:
        train = simulate_regression(
            params, config.train_environment, config.n_train, seed_for(seed, rep, Stage.TRAIN_GENERATE)
        )
        tests = [
            simulate_regression(params, env, config.n_test, seed_for(seed, rep, Stage.TEST_GENERATE, k))
            for k, env in enumerate(config.test_environments, start=1)
        ]
        return train, tests

    pop = simulate_classification_population(
        params, config.n_population, seed_for(seed, rep, Stage.TRAIN_GENERATE)
    )
    train = biased_subsample(
        pop, config.train_environment.cell_probs, config.n_train, seed_for(seed, rep, Stage.TRAIN_SELECT)
    )
    tests = []
    for k, env in enumerate(config.test_environments, start=1):
        pop = simulate_classification_population(
            params, config.n_population, seed_for(seed, rep, Stage.TEST_GENERATE, k)
        )
        tests.append(
            biased_subsample(pop, env.cell_probs, config.n_test, seed_for(seed, rep, Stage.TEST_SELECT, k))
        )
    return train, tests


def _score_strategy(config, train, tests, strategy, rep) -> list[float]:
    rng = seed_for(config.master_seed, rep, Stage.STRATEGY, _STRATEGY_INDEX[strategy])
    train_p, tests_p = prepare(train, tests, strategy, rng, intercept=config.adjust_intercept)
    if config.task is Task.REGRESSION:
        w = fit_ols(train_p.x, train_p.y)
        return [mse(t.y, predict_linear(t.x, w)) for t in tests_p]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeparationWarning)
        w = fit_logistic(train_p.x, train_p.y)
    if w.separated:
        raise CausawareError("logistic fit separated")
    if not w.converged:
        raise CausawareError(f"logistic fit did not converge in {w.iterations} iterations")
    return [auroc(t.y, predict_proba(t.x, w)) for t in tests_p]


def draw_replication_params(config: ExperimentConfig, rep: int):
    return draw_params(
        config.task,
        config.feature_count,
        config.confounder_count,
        list(config.environments) if config.task is Task.REGRESSION else [],
        seed_for(config.master_seed, rep, Stage.PARAMS),
    )


def run_replication(
    config: ExperimentConfig, params, rep_index: int
) -> tuple[list[ResultRow], list[FailureRecord]]:
    """One replication: one dataset family, every strategy scored on every test env.

    A strategy that raises is recorded as a FailureRecord; the others still run.
    """
    rows: list[ResultRow] = []
    failures: list[FailureRecord] = []
    try:
        train, tests = generate_datasets(config, params, rep_index)
    except CausawareError as exc:
        return rows, [FailureRecord(rep_index, s, f"data generation: {exc}") for s in config.strategies]
    for strategy in config.strategies:
        try:
            values = _score_strategy(config, train, tests, strategy, rep_index)
        except (CausawareError, np.linalg.LinAlgError) as exc:
            failures.append(FailureRecord(rep_index, strategy, f"{type(exc).__name__}: {exc}"))
            continue
        rows.extend(
            ResultRow(rep_index, strategy, k, config.metric, v)
            for k, v in enumerate(values, start=1)
        )
    return rows, failures


def _run_one(config: ExperimentConfig, rep: int):
    try:
        params = draw_replication_params(config, rep)
    except CausawareError as exc:
        return [], [FailureRecord(rep, s, f"parameter draw: {exc}") for s in config.strategies]
    return run_replication(config, params, rep)


def summarize(config: ExperimentConfig, rows, failures) -> Summary:
    """Aggregate rows into per-(strategy, env) stats and per-strategy stability.

    Depends only on the row set, not its order.
    """
    n_env = len(config.test_environments)
    failed = {}
    for f in failures:
        failed.setdefault(f.strategy, set()).add(f.replication)
    table: dict[Strategy, dict[int, np.ndarray]] = {s: {} for s in config.strategies}
    for r in rows:
        vec = table[r.strategy].setdefault(r.replication, np.full(n_env, np.nan))
        vec[r.env - 1] = r.value
    cells, stability = [], {}
    for s in config.strategies:
        reps = sorted(table[s])
        mat = np.array([table[s][r] for r in reps]).reshape(len(reps), n_env)
        n_failed = len(failed.get(s, ()))
        for k in range(n_env):
            col = mat[:, k]
            col = col[np.isfinite(col)]
            cells.append(
                SummaryCell(
                    s,
                    k + 1,
                    float(col.mean()) if col.size else float("nan"),
                    float(col.std(ddof=1)) if col.size > 1 else float("nan"),
                    int(col.size),
                    n_failed,
                )
            )
        complete = mat[np.all(np.isfinite(mat), axis=1)] if mat.size else mat
        if complete.shape[0] >= 1 and n_env >= 2:
            stability[s] = stability_error(complete)
    return Summary(cells, stability, sorted(failures, key=_failure_key), config.metric)


def _row_key(r: ResultRow):
    return (r.replication, _STRATEGY_INDEX[r.strategy], r.env)


def _failure_key(f: FailureRecord):
    return (f.replication, _STRATEGY_INDEX[f.strategy])


def run_experiment(config: ExperimentConfig, threads: int = 1) -> tuple[list[ResultRow], Summary]:
    """Run every replication and aggregate.

    Replication ``r`` draws fresh parameters from its own stream, so results
    are identical for any ``threads`` value.
    """
    reps = range(config.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(lambda r: _run_one(config, r), reps))
    else:
        outputs = [_run_one(config, r) for r in reps]
    rows = sorted((row for out in outputs for row in out[0]), key=_row_key)
    failures = [f for out in outputs for f in out[1]]
    if failures:
        log.warning("%d strategy fits failed across %d replications", len(failures), config.replications)
    return rows, summarize(config, rows, failures)
