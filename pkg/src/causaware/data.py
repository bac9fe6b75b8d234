"""Container for one sample of (features, confounders, outcome)."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _as_columns(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValidationError(f"expected a 2-D array, got shape {a.shape}")
    return a


class Task(str, enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


@dataclass(frozen=True, eq=False)
class Dataset:
    """n rows of features ``x`` (n, p), confounders ``c`` (n, m) and outcome ``y`` (n,).

    Arrays are copied to float64 and marked read-only so a Dataset can be
    shared freely between strategies and threads.
    """

    x: np.ndarray
    c: np.ndarray
    y: np.ndarray
    task: Task = Task.REGRESSION

    def __post_init__(self):
        x = _as_columns(self.x)
        c = _as_columns(self.c)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.shape[0] != y.shape[0] or c.shape[0] != y.shape[0]:
            raise ValidationError(
                f"row counts differ: x={x.shape[0]}, c={c.shape[0]}, y={y.shape[0]}"
            )
        for name, arr in (("x", x), ("c", c), ("y", y)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite entries in {name}")
        task = Task(self.task)
        if task is Task.CLASSIFICATION and not np.all((y == 0) | (y == 1)):
            raise ValidationError("classification outcome must be 0/1")
        for arr in (x, c, y):
            arr.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "task", task)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.c.shape[1]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.x[idx], self.c[idx], self.y[idx], self.task)

    def with_features(self, x) -> "Dataset":
        return Dataset(x, self.c, self.y, self.task)

    def cell_index(self) -> np.ndarray:
        """Cell id ``2*C + Y`` per row (0=00, 1=01, 2=10, 3=11); needs binary C (m=1) and Y."""
        if self.m != 1:
            raise ValidationError("cell operations need exactly one confounder")
        c = self.c[:, 0]
        if not (np.all((c == 0) | (c == 1)) and np.all((self.y == 0) | (self.y == 1))):
            raise ValidationError("cell operations need binary C and Y")
        return (2 * c + self.y).astype(np.intp)

    def cell_counts(self) -> np.ndarray:
        return np.bincount(self.cell_index(), minlength=4)

    def equals(self, other: "Dataset") -> bool:
        """Bitwise equality of all arrays and the task."""
        return (
            self.task is other.task
            and self.x.shape == other.x.shape
            and self.c.shape == other.c.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.c, other.c)
            and np.array_equal(self.y, other.y)
        )
