"""Causality-aware feature adjustment and the roster of comparison strategies."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DimensionMismatchError, SingularDesignError, ValidationError
from .models import lstsq_qr
from . import selection


class Strategy(str, enum.Enum):
    """How training and test sets are processed before model fitting.

    ``counterfactual_normalization`` parses to CAUSALITY_AWARE: in the linear
    anticausal model its counterfactual features X_j(C = empty) are computed
    exactly as X_j - b_xc C, so both routes give identical predictions.
    """

    CAUSALITY_AWARE = "causality_aware"
    POOR_MANS = "poor_mans"
    MATCHING = "matching"
    APPROX_IPW = "approx_ipw"
    NO_ADJUSTMENT = "no_adjustment"

    @classmethod
    def parse(cls, name: "str | Strategy") -> "Strategy":
        if isinstance(name, Strategy):
            return name
        key = str(name).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "counterfactual_normalization": cls.CAUSALITY_AWARE,
            "ca": cls.CAUSALITY_AWARE,
            "ipw": cls.APPROX_IPW,
            "none": cls.NO_ADJUSTMENT,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ValidationError(f"unknown strategy {name!r}; expected one of {valid}") from None

    @property
    def needs_binary_cells(self) -> bool:
        return self in (Strategy.MATCHING, Strategy.APPROX_IPW)


@dataclass(frozen=True, eq=False)
class AdjustmentModel:
    """Fitted confounder coefficients, reusable on any later batch of features.

    ``b_xc_hat`` is (p, m), ``b_xy_hat`` is (p,). ``intercept`` is None for the
    default centered fit.
    """

    b_xc_hat: np.ndarray
    b_xy_hat: np.ndarray
    fitted_on: int
    intercept: np.ndarray | None = None

    def __post_init__(self):
        b_xc = np.array(self.b_xc_hat, dtype=float, ndmin=2)
        b_xy = np.array(self.b_xy_hat, dtype=float).reshape(-1)
        if b_xc.shape[0] != b_xy.size:
            raise DimensionMismatchError(
                f"b_xc_hat has {b_xc.shape[0]} rows but b_xy_hat has {b_xy.size} entries"
            )
        if not (np.all(np.isfinite(b_xc)) and np.all(np.isfinite(b_xy))):
            raise ValidationError("adjustment coefficients must be finite")
        b_xc.flags.writeable = False
        b_xy.flags.writeable = False
        object.__setattr__(self, "b_xc_hat", b_xc)
        object.__setattr__(self, "b_xy_hat", b_xy)
        if self.intercept is not None:
            icpt = np.array(self.intercept, dtype=float).reshape(-1)
            icpt.flags.writeable = False
            object.__setattr__(self, "intercept", icpt)

    @property
    def p(self) -> int:
        return self.b_xc_hat.shape[0]

    @property
    def m(self) -> int:
        return self.b_xc_hat.shape[1]

    def to_dict(self) -> dict:
        d = {
            "format": "causaware.adjustment/1",
            "p": self.p,
            "m": self.m,
            "fitted_on": self.fitted_on,
            "b_xc_hat": self.b_xc_hat.tolist(),
            "b_xy_hat": self.b_xy_hat.tolist(),
        }
        if self.intercept is not None:
            d["intercept"] = self.intercept.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AdjustmentModel":
        model = cls(
            b_xc_hat=np.array(d["b_xc_hat"], dtype=float).reshape(d["p"], d["m"]),
            b_xy_hat=d["b_xy_hat"],
            fitted_on=int(d["fitted_on"]),
            intercept=d.get("intercept"),
        )
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "AdjustmentModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_adjustment(train: Dataset, intercept: bool = False) -> AdjustmentModel:
    """Regress every feature on (Y, C_1..C_m) by least squares.

    No intercept by default since the data are assumed centered; with
    ``intercept=True`` a constant column is added and only the C part is
    later subtracted.
    """
    cols = [train.y[:, None], train.c]
    if intercept:
        cols.insert(0, np.ones((train.n, 1)))
    design = np.hstack(cols)
    if train.n <= design.shape[1]:
        raise SingularDesignError(
            f"{train.n} rows cannot identify {design.shape[1]} adjustment coefficients"
        )
    coef = lstsq_qr(design, train.x)  # (k, p)
    off = 1 if intercept else 0
    return AdjustmentModel(
        b_xc_hat=coef[off + 1 :, :].T,
        b_xy_hat=coef[off, :],
        fitted_on=train.n,
        intercept=coef[0, :] if intercept else None,
    )


def transform(features, confounders, model: AdjustmentModel) -> np.ndarray:
    """Subtract the fitted confounder contribution; labels are never needed."""
    features = np.asarray(features, dtype=float)
    confounders = np.asarray(confounders, dtype=float)
    if confounders.ndim == 1:
        confounders = confounders.reshape(-1, 1)
    if features.ndim != 2 or features.shape[1] != model.p:
        raise DimensionMismatchError(f"features must have {model.p} columns, got {features.shape}")
    if confounders.shape != (features.shape[0], model.m):
        raise DimensionMismatchError(
            f"confounders must be {features.shape[0]}x{model.m}, got {confounders.shape}"
        )
    return features - confounders @ model.b_xc_hat.T


def prepare(
    train: Dataset,
    tests: list[Dataset],
    strategy: Strategy | str,
    rng: np.random.Generator,
    intercept: bool = False,
) -> tuple[Dataset, list[Dataset]]:
    """Apply ``strategy`` and return the processed training and test sets.

    Only CAUSALITY_AWARE touches the test sets; every other strategy returns
    them as the same objects.
    """
    strategy = Strategy.parse(strategy)
    tests = list(tests)
    if strategy is Strategy.NO_ADJUSTMENT:
        return train, tests
    if strategy is Strategy.MATCHING:
        return selection.match_undersample(train, rng), tests
    if strategy is Strategy.APPROX_IPW:
        return selection.ipw_oversample(train, rng), tests
    model = fit_adjustment(train, intercept=intercept)
    train_adj = train.with_features(transform(train.x, train.c, model))
    if strategy is Strategy.POOR_MANS:
        return train_adj, tests
    return train_adj, [t.with_features(transform(t.x, t.c, model)) for t in tests]
