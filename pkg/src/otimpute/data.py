"""Dataset containers, standardization, imputation-state setup, and batch sampling.

Conventions used throughout the package:
  * mask entries are 1 where a value is observed and 0 where it is missing;
  * matrices are float64 numpy arrays of shape (n, d);
  * unobserved entries of an IncompleteMatrix hold NaN placeholders so that an
    accidental read poisons downstream results instead of passing silently.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    BatchTooLarge,
    ColumnAllMissing,
    FallbackToUniform,
    MaskedValueError,
)

STD_CLAMP = 1e-12


def _as_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask must contain only 0/1 entries")
    return mask.astype(np.uint8)


@dataclass(frozen=True)
class IncompleteMatrix:
    """An n x d real matrix together with its observation mask.

    Attributes:
        values: data matrix; positions with mask == 0 hold NaN placeholders.
        mask: binary matrix, 1 = observed.
        column_names: optional labels, one per column.

    Columns with no observed entry are legal here (a freshly collected row
    batch handed to a fitted model may miss a column entirely); fit-time
    statistics reject them via observed_column_stats.
    """

    values: np.ndarray
    mask: np.ndarray
    column_names: tuple | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        mask = _as_mask(self.mask)
        if values.ndim != 2 or mask.shape != values.shape:
            raise ValueError(
                f"values {values.shape} and mask {mask.shape} must be 2-d and equal"
            )
        if not np.isfinite(values[mask == 1]).all():
            raise ValueError("observed entries must be finite")
        values[mask == 0] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        if self.column_names is not None:
            names = tuple(str(c) for c in self.column_names)
            if len(names) != values.shape[1]:
                raise ValueError("column_names length must equal d")
            object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def missing_fraction(self) -> float:
        return float((self.mask == 0).mean())

    def value_at(self, i: int, j: int) -> float:
        """Observed value at (i, j); raises if the position is masked out."""
        if self.mask[i, j] == 0:
            raise MaskedValueError(f"position ({i}, {j}) is missing")
        return float(self.values[i, j])


@dataclass
class ImputationState:
    """Mutable imputation buffer: observed entries fixed, missing entries free.

    means/stds record the standardization applied upstream so results can be
    mapped back to original units.
    """

    data: np.ndarray
    mask: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "ImputationState":
        return ImputationState(
            self.data.copy(), self.mask, self.means.copy(), self.stds.copy()
        )


@dataclass(frozen=True)
class EmpiricalMeasure:
    """A batch of points with simplex weights (uniform by default)."""

    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.weights is None:
            m = points.shape[0]
            weights = np.full(m, 1.0 / m)
        else:
            weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (points.shape[0],):
            raise ValueError("weights must be one per point")
        if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        return self.points.shape[0]


def observed_column_stats(values: np.ndarray, mask: np.ndarray):
    """Per-column mean and population std over observed entries only."""
    mask = np.asarray(mask)
    counts = mask.sum(axis=0)
    if (counts == 0).any():
        raise ColumnAllMissing(int(np.argmin(counts)))
    filled = np.where(mask == 1, values, 0.0)
    means = filled.sum(axis=0) / counts
    sq = np.where(mask == 1, (values - means) ** 2, 0.0)
    stds = np.sqrt(sq.sum(axis=0) / counts)
    return means, stds


def standardize(X: IncompleteMatrix):
    """Center and scale each column using observed entries only.

    Near-constant columns (population std below 1e-12) are centered but not
    scaled: the std is clamped to 1.

    Returns:
        (standardized IncompleteMatrix, means, stds)
    """
    means, stds = observed_column_stats(X.values, X.mask)
    stds = np.where(stds < STD_CLAMP, 1.0, stds)
    values = (X.values - means) / stds
    out = IncompleteMatrix(
        np.where(X.mask == 1, values, 0.0), X.mask, X.column_names
    )
    return out, means, stds


def unstandardize(values: np.ndarray, means: np.ndarray, stds: np.ndarray):
    return values * stds + means


def initialize_imputation(
    X: IncompleteMatrix, eta: float, rng: np.random.Generator, means=None, stds=None
) -> ImputationState:
    """Fill missing entries with the column mean plus N(0, eta^2) noise.

    eta is a standard deviation. Observed entries are copied unchanged. The
    optional means/stds record the standardization of X (identity if omitted).
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    col_means, _ = observed_column_stats(X.values, X.mask)
    data = np.where(X.mask == 1, X.values, col_means)
    if eta > 0:
        noise = eta * rng.standard_normal(data.shape)
        data = np.where(X.mask == 0, data + noise, data)
    d = X.d
    means = np.zeros(d) if means is None else np.asarray(means, dtype=np.float64)
    stds = np.ones(d) if stds is None else np.asarray(stds, dtype=np.float64)
    return ImputationState(data, X.mask, means, stds)


def sample_batch_pair(state: ImputationState, m: int, rng: np.random.Generator):
    """Two independent uniform draws of m distinct row indices (sets may overlap)."""
    n = state.n
    if m < 1:
        raise ValueError("batch size must be at least 1")
    if m > n:
        raise BatchTooLarge(f"batch size {m} exceeds {n} rows")
    K = rng.choice(n, size=m, replace=False)
    L = rng.choice(n, size=m, replace=False)
    return K, L


def sample_batch_pair_stratified(
    state: ImputationState, m: int, j: int, rng: np.random.Generator
):
    """Batch pair stratified on column j: K observed on j, L missing on j.

    Only legitimate under MCAR; the caller asserts that. L is drawn with
    replacement when fewer than m rows are missing on j. Raises
    FallbackToUniform when the split is infeasible (fewer than m rows observed
    on j, or no row missing on j).
    """
    col = state.mask[:, j]
    observed_rows = np.flatnonzero(col == 1)
    missing_rows = np.flatnonzero(col == 0)
    if len(observed_rows) < m or len(missing_rows) == 0:
        raise FallbackToUniform(
            f"column {j}: {len(observed_rows)} observed / {len(missing_rows)} missing rows"
        )
    K = rng.choice(observed_rows, size=m, replace=False)
    L = rng.choice(missing_rows, size=m, replace=len(missing_rows) < m)
    return K, L


def resolve_batch_size(n: int) -> int:
    """Batch-size rule: 128 for n > 256, else the largest power of two <= n/2."""
    if n < 2:
        raise ValueError("need at least 2 rows")
    if n > 256:
        return 128
    return 2 ** int(np.floor(np.log2(n / 2.0)))


MISSING_TOKENS = {"", "na", "nan"}


def read_csv(path) -> IncompleteMatrix:
    """Load a numeric CSV with a header row; empty cells or `NA` are missing."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows, mask_rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
                )
            vals, obs = [], []
            for col, cell in zip(header, row):
                cell = cell.strip()
                if cell.lower() in MISSING_TOKENS:
                    vals.append(np.nan)
                    obs.append(0)
                else:
                    try:
                        vals.append(float(cell))
                    except ValueError:
                        raise ValueError(
                            f"{path}:{lineno}: non-numeric cell {cell!r} in column {col!r}"
                        ) from None
                    obs.append(1)
            rows.append(vals)
            mask_rows.append(obs)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return IncompleteMatrix(np.array(rows), np.array(mask_rows), tuple(header))


def write_csv(path, values: np.ndarray, column_names=None, mask=None):
    """Write a matrix as CSV; positions with mask == 0 become empty cells."""
    values = np.asarray(values)
    n, d = values.shape
    if column_names is None:
        column_names = [f"x{j}" for j in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(column_names)
        for i in range(n):
            row = []
            for j in range(d):
                if mask is not None and mask[i, j] == 0:
                    row.append("")
                else:
                    row.append(repr(float(values[i, j])))
            writer.writerow(row)


def write_mask_csv(path, mask: np.ndarray, column_names=None):
    """Write a 0/1 observation mask as CSV for audit."""
    mask = np.asarray(mask)
    if column_names is None:
        column_names = [f"x{j}" for j in range(mask.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(column_names)
        for row in mask:
            writer.writerow([int(v) for v in row])
