"""Imputation-quality metrics: pointwise MAE/RMSE over missing entries and the
distributional W2 metric over rows carrying at least one missing value.

Metrics are computed in standardized units; the report records that
convention. m0 counts missing entries, m1 counts rows with >= 1 missing entry
(their index set is the W2 restriction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NoMissingEntries, TooLarge
from .ot import W2_DEFAULT_CAP, exact_w2


@dataclass
class MetricReport:
    mae: float
    rmse: float
    w2: float | None
    m0: int
    m1: int
    w2_skipped: bool = False
    w2_skip_reason: str | None = None
    units: str = "standardized"

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "w2": self.w2,
            "m0": self.m0,
            "m1": self.m1,
            "w2_skipped": self.w2_skipped,
            "w2_skip_reason": self.w2_skip_reason,
            "units": self.units,
        }


def _missing_diffs(X_true, X_hat, mask):
    X_true = np.asarray(X_true, dtype=np.float64)
    X_hat = np.asarray(X_hat, dtype=np.float64)
    mask = np.asarray(mask)
    if not (X_true.shape == X_hat.shape == mask.shape):
        raise ValueError("X_true, X_hat, and mask must share one shape")
    miss = mask == 0
    if not miss.any():
        raise NoMissingEntries("metrics are undefined with zero missing entries")
    return X_true[miss] - X_hat[miss]


def mae(X_true, X_hat, mask) -> float:
    return float(np.abs(_missing_diffs(X_true, X_hat, mask)).mean())


def rmse(X_true, X_hat, mask) -> float:
    return float(np.sqrt((_missing_diffs(X_true, X_hat, mask) ** 2).mean()))


def w2_metric(X_true, X_hat, mask, cap: int = W2_DEFAULT_CAP) -> float:
    """Exact squared-W2 between imputed and true rows restricted to M1.

    Raises TooLarge when M1 exceeds the cap (callers that want a soft skip use
    `evaluate`, which converts that into a flagged report).
    """
    mask = np.asarray(mask)
    rows = np.flatnonzero((mask == 0).any(axis=1))
    if rows.size == 0:
        raise NoMissingEntries("no row has a missing entry")
    return exact_w2(np.asarray(X_hat)[rows], np.asarray(X_true)[rows], cap=cap)


def evaluate(X_true, X_hat, mask, cap: int = W2_DEFAULT_CAP) -> MetricReport:
    """All three metrics in one report; W2 is skipped (flagged) above the cap."""
    mask = np.asarray(mask)
    m0 = int((mask == 0).sum())
    m1 = int(((mask == 0).any(axis=1)).sum())
    report = MetricReport(
        mae=mae(X_true, X_hat, mask),
        rmse=rmse(X_true, X_hat, mask),
        w2=None,
        m0=m0,
        m1=m1,
    )
    try:
        report.w2 = w2_metric(X_true, X_hat, mask, cap=cap)
    except TooLarge as exc:
        report.w2_skipped = True
        report.w2_skip_reason = str(exc)
    return report
