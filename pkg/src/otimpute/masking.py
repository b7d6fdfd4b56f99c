"""Missing-value mask generators: MCAR, MAR-logistic, MNAR-logistic, and
MNAR-quantile, each calibrated to a target missingness proportion.

All generators return an n x d uint8 mask (1 = observed) and guarantee that no
row or column ends up fully missing: offending rows/columns are redrawn up to
100 times, after which MaskGenerationError is raised. Masks depend only on
(X, parameters, seed) and are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import expit

from .exceptions import (
    CalibrationFailure,
    InfeasibleRate,
    InvalidRate,
    MaskGenerationError,
)

MECHANISMS = ("mcar", "mar_logistic", "mnar_logistic", "mnar_quantile")

REPAIR_ATTEMPTS = 100
BISECT_TOL = 1e-6


def _draw_mask(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Entry (i, j) missing with probability probs[i, j]."""
    u = rng.random(probs.shape)
    return (u >= probs).astype(np.uint8)


def _repair_mask(mask: np.ndarray, probs: np.ndarray, rng: np.random.Generator):
    """Redraw fully-missing rows/columns so every slice keeps an observed entry."""
    for _ in range(REPAIR_ATTEMPTS):
        bad_rows = np.flatnonzero(mask.sum(axis=1) == 0)
        bad_cols = np.flatnonzero(mask.sum(axis=0) == 0)
        if bad_rows.size == 0 and bad_cols.size == 0:
            return mask
        for i in bad_rows:
            mask[i] = _draw_mask(probs[i][None, :], rng)[0]
        for j in bad_cols:
            mask[:, j] = _draw_mask(probs[:, j][:, None], rng)[:, 0]
    raise MaskGenerationError(
        f"could not obtain observed entries in every row/column after "
        f"{REPAIR_ATTEMPTS} redraws"
    )


def _check_rate(p: float, allow_zero: bool = False):
    lo_ok = p >= 0 if allow_zero else p > 0
    if not (lo_ok and p < 1):
        raise InvalidRate(f"missing rate must lie in {'[0,1)' if allow_zero else '(0,1)'}, got {p}")


def mcar_mask(n: int, d: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(p) missingness on every entry.

    p = 0 is accepted at this level and returns an all-observed mask; config
    validation (MaskSpec) keeps benchmark rates strictly inside (0, 1).
    """
    _check_rate(p, allow_zero=True)
    probs = np.full((n, d), p)
    mask = _draw_mask(probs, rng)
    return _repair_mask(mask, probs, rng)


def _bisect_intercept(z: np.ndarray, p: float) -> float:
    """Solve mean(sigmoid(z + b)) = p for b on [-50, 50] by bisection."""
    lo, hi = -50.0, 50.0
    f_lo = expit(z + lo).mean() - p
    f_hi = expit(z + hi).mean() - p
    if f_lo > 0 or f_hi < 0:
        raise CalibrationFailure(
            f"target rate {p} not bracketed by intercepts in [-50, 50]"
        )
    mid = 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        f_mid = expit(z + mid).mean() - p
        if abs(f_mid) < BISECT_TOL:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    raise CalibrationFailure(
        f"bisection did not reach tolerance {BISECT_TOL} within 100 iterations"
    )


def _logistic_missing_probs(X, p, input_fraction, rng):
    """Per-entry missingness probabilities for the logistic mechanisms.

    A random subset of ceil(input_fraction * d) columns drives the logistic
    model; each remaining column j gets probabilities sigmoid(X_in w_j + b_j)
    with standard-Gaussian weights rescaled to unit linear-term variance and
    an intercept calibrated so the column's mean probability equals p.
    Returns (probs with zeros on input columns, input column indices).
    """
    X = np.asarray(X, dtype=np.float64)
    if not np.isfinite(X).all():
        raise ValueError("logistic mechanisms need a complete data matrix")
    n, d = X.shape
    n_inputs = math.ceil(input_fraction * d)
    if n_inputs >= d:
        raise ValueError(
            f"input_fraction {input_fraction} leaves no output column (d={d})"
        )
    inputs = np.sort(rng.choice(d, size=n_inputs, replace=False))
    X_in = X[:, inputs]
    probs = np.zeros((n, d))
    output_cols = [j for j in range(d) if j not in set(inputs.tolist())]
    for j in output_cols:
        w = rng.standard_normal(n_inputs)
        z = X_in @ w
        sd = z.std()
        if sd > 1e-12:
            z = z / sd
        b = _bisect_intercept(z, p)
        probs[:, j] = expit(z + b)
    return probs, inputs


def mar_logistic_mask(X, p, input_fraction, rng) -> np.ndarray:
    """Missing at random: input columns stay fully observed, the rest are
    masked with logistic probabilities driven by the inputs."""
    _check_rate(p)
    probs, _ = _logistic_missing_probs(X, p, input_fraction, rng)
    mask = _draw_mask(probs, rng)
    return _repair_mask(mask, probs, rng)


def mnar_logistic_mask(X, p, input_fraction, rng) -> np.ndarray:
    """MNAR variant: as MAR-logistic, then the logistic input columns are
    additionally masked MCAR at rate p, so every column has expected rate p.

    The Bernoulli field is drawn in one pass over the full matrix, so under a
    shared seed the output-column masks coincide with mar_logistic_mask's.
    """
    _check_rate(p)
    probs, inputs = _logistic_missing_probs(X, p, input_fraction, rng)
    probs[:, inputs] = p
    mask = _draw_mask(probs, rng)
    return _repair_mask(mask, probs, rng)


def mnar_quantile_mask(X, p, q, column_fraction, rng) -> np.ndarray:
    """MNAR by censoring tails: on a random subset of ceil(column_fraction*d)
    columns, entries strictly outside the [q, 1-q] quantile band are masked
    with Bernoulli rate p / (2q); entries inside the band are never masked.
    """
    _check_rate(p, allow_zero=True)
    if not 0 < q < 0.5:
        raise InvalidRate(f"quantile level must lie in (0, 0.5), got {q}")
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    rate = p / (2.0 * q)
    if rate > 1.0 + 1e-9:
        raise InfeasibleRate(p, q)
    rate = min(rate, 1.0)
    n_sel = math.ceil(column_fraction * d)
    if not 1 <= n_sel <= d:
        raise InvalidRate(f"column_fraction {column_fraction} selects {n_sel} of {d} columns")
    cols = np.sort(rng.choice(d, size=n_sel, replace=False))
    probs = np.zeros((n, d))
    for j in cols:
        lo = np.quantile(X[:, j], q)
        hi = np.quantile(X[:, j], 1.0 - q)
        tails = (X[:, j] < lo) | (X[:, j] > hi)
        probs[tails, j] = rate
    mask = _draw_mask(probs, rng)
    return _repair_mask(mask, probs, rng)


@dataclass(frozen=True)
class MaskSpec:
    """Declarative mask recipe used in experiment configs.

    input_fraction names the logistic-input column fraction for the logistic
    mechanisms and the censored-column fraction for MNAR-quantile.
    """

    mechanism: str
    p: float
    input_fraction: float = 0.3
    q: float = 0.25
    seed: int | None = None

    def __post_init__(self):
        mech = self.mechanism.lower().replace("-", "_")
        object.__setattr__(self, "mechanism", mech)
        if mech not in MECHANISMS:
            raise InvalidRate(f"unknown mechanism {self.mechanism!r}; use one of {MECHANISMS}")
        if not 0 < self.p < 1:
            raise InvalidRate(f"target rate must lie in (0, 1), got {self.p}")
        if not 0 < self.input_fraction < 1:
            raise InvalidRate(
                f"input_fraction must lie in (0, 1), got {self.input_fraction}"
            )
        if not 0 < self.q < 0.5:
            raise InvalidRate(f"q must lie in (0, 0.5), got {self.q}")

    def generate(self, X, rng: np.random.Generator | None = None) -> np.ndarray:
        """Draw a mask for the complete matrix X (shape only is used for MCAR)."""
        if rng is None:
            rng = np.random.default_rng(self.seed)
        X = np.asarray(X, dtype=np.float64)
        n, d = X.shape
        if self.mechanism == "mcar":
            return mcar_mask(n, d, self.p, rng)
        if self.mechanism == "mar_logistic":
            return mar_logistic_mask(X, self.p, self.input_fraction, rng)
        if self.mechanism == "mnar_logistic":
            return mnar_logistic_mask(X, self.p, self.input_fraction, rng)
        return mnar_quantile_mask(X, self.p, self.q, self.input_fraction, rng)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "MaskSpec":
        return cls(**payload)
