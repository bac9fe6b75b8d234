"""Selection bias and resampling-based balancing for binary (C, Y).

Cells are indexed ``2*C + Y``: 0 -> (C=0, Y=0), 1 -> (0, 1), 2 -> (1, 0), 3 -> (1, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import (
    CellExhaustedError,
    UnmatchableError,
    UnreachableTargetError,
    ValidationError,
)

CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class CellProbs:
    """Selection probability of each (C=i, Y=j) cell; first index is C."""

    p00: float
    p01: float
    p10: float
    p11: float

    def __post_init__(self):
        probs = self.as_array()
        if not np.all(np.isfinite(probs)) or np.any(probs < 0) or np.any(probs > 1):
            raise ValidationError(f"cell probabilities must lie in [0, 1]: {tuple(probs)}")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValidationError(f"cell probabilities must sum to 1, got {probs.sum()!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p00, self.p01, self.p10, self.p11], dtype=float)

    @classmethod
    def from_sequence(cls, values) -> "CellProbs":
        p00, p01, p10, p11 = (float(v) for v in values)
        return cls(p00, p01, p10, p11)


@dataclass(frozen=True)
class BernoulliMoments:
    var_c: float
    var_y: float
    cov_cy: float
    cor_cy: float
    cor_defined: bool = True


def bernoulli_moments(probs: CellProbs) -> BernoulliMoments:
    """Second moments of the bivariate Bernoulli law given by ``probs``.

    The correlation is NaN with ``cor_defined=False`` when either marginal is
    degenerate.
    """
    p_c = probs.p10 + probs.p11
    p_y = probs.p01 + probs.p11
    var_c = p_c * (1 - p_c)
    var_y = p_y * (1 - p_y)
    cov = probs.p11 * probs.p00 - probs.p01 * probs.p10
    if var_c > 0 and var_y > 0:
        return BernoulliMoments(var_c, var_y, cov, cov / math.sqrt(var_c * var_y))
    return BernoulliMoments(var_c, var_y, cov, math.nan, cor_defined=False)


def _rows_by_cell(data: Dataset) -> list[np.ndarray]:
    cells = data.cell_index()
    return [np.flatnonzero(cells == k) for k in range(4)]


def biased_subsample(
    population: Dataset, probs: CellProbs, n: int, rng: np.random.Generator
) -> Dataset:
    """Draw ``n`` rows without replacement, each row's cell picked i.i.d. from ``probs``.

    Drawing the cell counts as one multinomial and then a uniform subset of
    each cell is the same law as n sequential (cell, unused row) draws; the
    final shuffle restores the interleaving.
    """
    if n < 0:
        raise ValidationError(f"n must be >= 0, got {n}")
    if n > population.n:
        raise ValidationError(f"requested {n} rows from a population of {population.n}")
    rows = _rows_by_cell(population)
    counts = rng.multinomial(n, probs.as_array())
    picked = []
    for k, (need, avail) in enumerate(zip(counts, rows)):
        if need > avail.size:
            raise CellExhaustedError(CELLS[k], int(need), int(avail.size))
        picked.append(rng.choice(avail, size=need, replace=False))
    idx = np.concatenate(picked)
    return population.take(rng.permutation(idx))


def _require_all_cells(data: Dataset, exc):
    rows = _rows_by_cell(data)
    empty = [CELLS[k] for k, r in enumerate(rows) if r.size == 0]
    if empty:
        raise exc(f"empty (C, Y) cells: {empty}")
    return rows


def match_undersample(data: Dataset, rng: np.random.Generator) -> Dataset:
    """Keep ``min(cell counts)`` random rows of every (C, Y) cell."""
    rows = _require_all_cells(data, UnmatchableError)
    k = min(r.size for r in rows)
    idx = np.concatenate([rng.choice(r, size=k, replace=False) for r in rows])
    return data.take(rng.permutation(idx))


def ipw_oversample(
    data: Dataset,
    rng: np.random.Generator,
    size: int | None = None,
    propensity: str = "auto",
) -> Dataset:
    """Approximate IPW by resampling with replacement into a balanced training set.

    With a single binary confounder the propensity model is saturated, so
    inverse-propensity weights are uniform within a cell and each cell is
    simply resampled up to ``size`` rows (default: largest cell count).

    Otherwise (``propensity="logistic"`` or more than one confounder) P(Y | C)
    is fitted by logistic regression and each outcome class is resampled to
    the largest class size with probabilities proportional to
    ``1 / P(Y = y_i | C_i)``, which makes C independent of Y in expectation.
    """
    saturated = propensity == "saturated" or (propensity == "auto" and data.m == 1)
    if saturated:
        rows = _require_all_cells(data, UnmatchableError)
        k = max(r.size for r in rows) if size is None else int(size)
        idx = np.concatenate([rng.choice(r, size=k, replace=True) for r in rows])
        return data.take(rng.permutation(idx))
    return _ipw_logistic(data, rng, size)


def _ipw_logistic(data: Dataset, rng, size):
    from .models import fit_logistic, predict_proba

    y = data.y
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("IPW resampling needs a binary outcome")
    classes = [np.flatnonzero(y == v) for v in (0, 1)]
    if any(r.size == 0 for r in classes):
        raise UnmatchableError("IPW resampling needs both outcome classes")
    w = fit_logistic(data.c, y)
    p1 = predict_proba(data.c, w)
    inv = np.where(y == 1, 1.0 / p1, 1.0 / (1.0 - p1))
    k = max(r.size for r in classes) if size is None else int(size)
    picked = []
    for r in classes:
        prob = inv[r] / inv[r].sum()
        picked.append(rng.choice(r, size=k, replace=True, p=prob))
    return data.take(rng.permutation(np.concatenate(picked)))


def apportion(total: int, probs) -> np.ndarray:
    """Largest-remainder split of ``total`` into integer counts; ties go to earlier cells."""
    probs = np.asarray(probs, dtype=float)
    quotas = np.round(total * probs, 9)
    counts = np.floor(quotas).astype(np.int64)
    left = int(total - counts.sum())
    if left > 0:
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:left]] += 1
    return counts


def rebalance_to_target(
    data: Dataset, target: CellProbs, mode: str, rng: np.random.Generator
) -> Dataset:
    """Resample ``data`` so its (C, Y) cell proportions match ``target``.

    ``undersample`` returns the largest output whose apportioned cell counts
    fit in the available rows; ``oversample`` keeps the input size and draws
    with replacement inside each cell.
    """
    rows = _rows_by_cell(data)
    avail = np.array([r.size for r in rows])
    t = target.as_array()
    missing = [CELLS[k] for k in range(4) if t[k] > 0 and avail[k] == 0]
    if missing:
        raise UnreachableTargetError(f"target needs rows from empty cells {missing}")
    if mode == "undersample":
        total = int(min(math.floor(avail[k] / t[k] + 1e-9) for k in range(4) if t[k] > 0))
        counts = apportion(total, t)
        while np.any(counts > avail):
            total -= 1
            counts = apportion(total, t)
        replace = False
    elif mode == "oversample":
        counts = apportion(data.n, t)
        replace = True
    else:
        raise ValidationError(f"mode must be 'undersample' or 'oversample', got {mode!r}")
    idx = np.concatenate(
        [rng.choice(r, size=int(k), replace=replace) for r, k in zip(rows, counts)]
    )
    return data.take(rng.permutation(idx))
