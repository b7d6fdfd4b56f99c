"""Classical imputation baselines: column means, chained-equations ridge
regression, and iterative soft-thresholded SVD (softimpute)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import IncompleteMatrix, observed_column_stats
from ..exceptions import ColumnAllMissing

RIDGE_FLOOR = 1e-6
ICE_TOL = 1e-4
SOFTIMPUTE_TOL = 1e-5
SOFTIMPUTE_MAX_ITERS = 500


def impute_mean(X: IncompleteMatrix) -> np.ndarray:
    """Each missing entry becomes its column's observed mean."""
    means, _ = observed_column_stats(X.values, X.mask)
    return np.where(X.mask == 1, X.values, means)


@dataclass
class IceModel:
    """Frozen chained-equations state for out-of-sample reuse."""

    coefs: list  # per column: (weights over other columns, intercept)
    col_means: np.ndarray
    order: np.ndarray  # visit order (increasing training missing count)
    n_cycles: int


def _ridge_fit(Z: np.ndarray, y: np.ndarray, lam: float):
    """Ridge with an unpenalized intercept via the augmented normal equations."""
    k = Z.shape[1]
    A = np.hstack([Z, np.ones((Z.shape[0], 1))])
    gram = A.T @ A
    gram[np.arange(k), np.arange(k)] += lam
    sol = np.linalg.solve(gram, A.T @ y)
    return sol[:k], sol[k]


def ice_fit(
    X: IncompleteMatrix,
    n_cycles: int = 10,
    ridge_lambda: float = 1e-3,
    tol: float = ICE_TOL,
):
    """Iterative conditional-expectation imputation with ridge regressions.

    Columns are visited in increasing-missing-count order; each visit refits a
    ridge model of the column on all others (current values) and overwrites
    the column's missing entries with predictions. Stops after n_cycles or
    when the largest imputation change over a cycle drops below tol.

    Returns (completed matrix, IceModel for out-of-sample reuse).
    """
    if X.d < 2:
        raise ValueError("chained equations need at least 2 columns")
    lam = max(ridge_lambda, RIDGE_FLOOR)
    mask = X.mask
    col_means, _ = observed_column_stats(X.values, X.mask)
    data = np.where(mask == 1, X.values, col_means)
    missing_counts = (mask == 0).sum(axis=0)
    order = np.argsort(missing_counts, kind="stable")
    coefs = [None] * X.d
    for _ in range(n_cycles):
        max_change = 0.0
        for j in order:
            obs = mask[:, j] == 1
            others = np.arange(X.d) != j
            w, b = _ridge_fit(data[obs][:, others], data[obs, j], lam)
            coefs[j] = (w, b)
            mis = ~obs
            if mis.any():
                pred = data[mis][:, others] @ w + b
                change = np.abs(pred - data[mis, j]).max()
                max_change = max(max_change, float(change))
                data[mis, j] = pred
        if max_change < tol:
            break
    return data, IceModel(coefs, col_means, order, n_cycles)


def impute_ice(
    X: IncompleteMatrix, n_cycles: int = 10, ridge_lambda: float = 1e-3
) -> np.ndarray:
    completed, _ = ice_fit(X, n_cycles=n_cycles, ridge_lambda=ridge_lambda)
    return completed


def ice_transform(model: IceModel, X_new: IncompleteMatrix) -> np.ndarray:
    """Apply frozen chained-equations coefficients to new incomplete rows."""
    if X_new.d != len(model.coefs):
        raise ValueError(
            f"model has {len(model.coefs)} columns, data has {X_new.d}"
        )
    mask = X_new.mask
    data = np.where(mask == 1, X_new.values, model.col_means)
    d = X_new.d
    for _ in range(model.n_cycles):
        max_change = 0.0
        for j in model.order:
            mis = mask[:, j] == 0
            if not mis.any():
                continue
            w, b = model.coefs[j]
            others = np.arange(d) != j
            pred = data[mis][:, others] @ w + b
            max_change = max(max_change, float(np.abs(pred - data[mis, j]).max()))
            data[mis, j] = pred
        if max_change < ICE_TOL:
            break
    return data


def soft_threshold(s: np.ndarray, lam: float) -> np.ndarray:
    """Shrink singular values toward zero: max(s - lam, 0)."""
    return np.maximum(np.asarray(s, dtype=np.float64) - lam, 0.0)


def softimpute_fixed(
    values: np.ndarray,
    mask: np.ndarray,
    lam: float,
    max_iters: int = SOFTIMPUTE_MAX_ITERS,
    tol: float = SOFTIMPUTE_TOL,
    z0: np.ndarray | None = None,
) -> np.ndarray:
    """Softimpute at a fixed shrinkage level.

    Iterates Z <- SVD-soft-threshold(observed X filled into Z) until the
    relative Frobenius change of Z falls below tol. z0 seeds the low-rank
    component (used to warm-start along a decreasing shrinkage path; without
    it, vanishing shrinkage degenerates to the zero fill).
    """
    mask = np.asarray(mask)
    observed = mask == 1
    values = np.asarray(values, dtype=np.float64)
    Z = np.zeros_like(values) if z0 is None else np.array(z0, dtype=np.float64)
    for _ in range(max_iters):
        A = np.where(observed, values, Z)
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        Z_new = (U * soft_threshold(s, lam)) @ Vt
        denom = max(np.linalg.norm(Z), 1e-12)
        rel = np.linalg.norm(Z_new - Z) / denom
        Z = Z_new
        if rel < tol:
            break
    return np.where(observed, values, Z)


def _holdout_mask(mask: np.ndarray, fraction: float, rng: np.random.Generator):
    """Hide a fraction of observed entries for cross-validation, keeping at
    least one observed entry in every column."""
    obs_idx = np.argwhere(mask == 1)
    k = max(1, int(round(fraction * len(obs_idx))))
    chosen = obs_idx[rng.choice(len(obs_idx), size=k, replace=False)]
    cv_mask = mask.copy()
    cv_mask[chosen[:, 0], chosen[:, 1]] = 0
    for j in np.flatnonzero(cv_mask.sum(axis=0) == 0):
        held = chosen[chosen[:, 1] == j]
        i = held[0][0]
        cv_mask[i, j] = 1  # give one entry back
    held_out = (mask == 1) & (cv_mask == 0)
    return cv_mask, held_out


def impute_softimpute(
    X: IncompleteMatrix,
    lambda_grid=None,
    cv_fraction: float = 0.1,
    max_iters: int = SOFTIMPUTE_MAX_ITERS,
    tol: float = SOFTIMPUTE_TOL,
    seed: int = 0,
) -> np.ndarray:
    """Softimpute with the shrinkage level chosen by held-out observed entries.

    An extra cv_fraction of observed entries is masked; the grid is walked in
    decreasing order with warm starts (small shrinkage is only meaningful when
    seeded from the previous solution) and each level is scored by RMSE on the
    held-out entries; the winner is refit on the full observed set along the
    same warm-start path. The default grid spans fractions of the top singular
    value of the zero-filled matrix.
    """
    values = np.where(X.mask == 1, X.values, 0.0)
    if lambda_grid is None:
        top = np.linalg.svd(values, compute_uv=False)[0]
        lambda_grid = [top * frac for frac in (0.5, 0.2, 0.1, 0.05, 0.02, 0.01)]
    lambda_grid = sorted(lambda_grid, reverse=True)
    if not lambda_grid:
        raise ValueError("lambda_grid must be nonempty")
    if len(lambda_grid) == 1:
        return softimpute_fixed(values, X.mask, lambda_grid[0], max_iters, tol)
    rng = np.random.default_rng(seed)
    cv_mask, held_out = _holdout_mask(X.mask, cv_fraction, rng)
    cv_values = np.where(cv_mask == 1, values, 0.0)
    best_lam, best_rmse = None, np.inf
    z = None
    for lam in lambda_grid:
        completed = softimpute_fixed(cv_values, cv_mask, lam, max_iters, tol, z0=z)
        z = np.where(cv_mask == 1, cv_values, completed)
        err = completed[held_out] - values[held_out]
        score = float(np.sqrt((err**2).mean()))
        if score < best_rmse:
            best_lam, best_rmse = lam, score
    z = None
    for lam in lambda_grid:
        completed = softimpute_fixed(values, X.mask, lam, max_iters, tol, z0=z)
        z = np.where(X.mask == 1, values, completed)
        if lam == best_lam:
            return completed
    raise AssertionError("unreachable: best_lam comes from lambda_grid")
