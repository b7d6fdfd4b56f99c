"""Non-parametric batch imputation: treat the missing entries as free
parameters and run RMSprop on minibatch Sinkhorn divergences.

Each step draws several batch pairs, averages the debiased divergence over
them, zeroes gradient coordinates at observed entries, and applies one lazy
RMSprop update to the rows touched by the sampled batches (their accumulators
only are advanced, so unsampled rows keep their state).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from ..data import (
    IncompleteMatrix,
    initialize_imputation,
    resolve_batch_size,
    sample_batch_pair,
)
from ..exceptions import LossDiverged
from ..metrics import evaluate
from ..ot import batch_divergence_grads, median_heuristic_epsilon

RMSPROP_DELTA = 1e-8


@dataclass
class DirectConfig:
    """Hyperparameters for the direct batch imputer.

    n_iters counts outer steps; each draws n_pairs batch pairs, so the total
    number of pair evaluations is n_iters * n_pairs (the 3000-pair default is
    300 x 10). epsilon=None applies the median heuristic on the initialized
    matrix. batch_size=None applies the dataset-size rule.
    """

    eta: float = 0.1
    epsilon: float | None = None
    median_fraction: float = 0.05
    batch_size: int | None = None
    n_pairs: int = 10
    n_iters: int = 300
    step_size: float = 1e-2
    rho: float = 0.9
    sinkhorn_max_iters: int = 1000
    sinkhorn_tol: float = 1e-3
    monitor_fraction: float = 0.0
    monitor_every: int = 50

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "DirectConfig":
        return cls(**payload)


@dataclass
class DirectDiagnostics:
    epsilon: float
    batch_size: int
    loss_history: list = field(default_factory=list)
    n_unconverged_solves: int = 0
    monitor_reports: list = field(default_factory=list)
    seconds: float = 0.0

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "batch_size": self.batch_size,
            "final_loss": self.loss_history[-1] if self.loss_history else None,
            "n_unconverged_solves": self.n_unconverged_solves,
            "seconds": self.seconds,
        }


def _monitor_holdout(X: IncompleteMatrix, fraction: float, rng: np.random.Generator):
    """Pick fictional missing entries among observed ones for validation.

    Returns (training mask with holdouts removed, boolean holdout matrix).
    Every column keeps at least one observed training entry.
    """
    obs_idx = np.argwhere(X.mask == 1)
    k = max(1, int(round(fraction * len(obs_idx))))
    chosen = obs_idx[rng.choice(len(obs_idx), size=k, replace=False)]
    train_mask = X.mask.copy()
    train_mask[chosen[:, 0], chosen[:, 1]] = 0
    for j in np.flatnonzero(train_mask.sum(axis=0) == 0):
        held = chosen[chosen[:, 1] == j]
        train_mask[held[0][0], j] = 1
    holdout = (X.mask == 1) & (train_mask == 0)
    return train_mask, holdout


def fit_direct(
    X: IncompleteMatrix, cfg: DirectConfig | None = None, rng=None
):
    """Run the batch Sinkhorn imputer; returns (completed matrix, diagnostics).

    X is expected in standardized units. Observed entries are never modified.
    """
    cfg = cfg or DirectConfig()
    if rng is None:
        rng = np.random.default_rng(0)
    elif not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    t0 = time.perf_counter()

    values, mask = X.values, X.mask
    if (mask == 1).all():
        diag = DirectDiagnostics(epsilon=0.0, batch_size=0)
        diag.seconds = time.perf_counter() - t0
        return values.copy(), diag

    holdout = None
    work = X
    if cfg.monitor_fraction > 0:
        # separate stream so monitoring never shifts the batch-sampling draws
        monitor_rng = rng.spawn(1)[0]
        train_mask, holdout = _monitor_holdout(X, cfg.monitor_fraction, monitor_rng)
        work = IncompleteMatrix(
            np.where(X.mask == 1, values, 0.0), train_mask, X.column_names
        )

    state = initialize_imputation(work, cfg.eta, rng)
    n, d = state.n, state.d
    m = cfg.batch_size or resolve_batch_size(n)
    eps = cfg.epsilon or median_heuristic_epsilon(state.data, cfg.median_fraction)
    free = (work.mask == 0).astype(np.float64)
    diag = DirectDiagnostics(epsilon=eps, batch_size=m)

    v = np.zeros((n, d))  # RMSprop second moments, advanced lazily
    grad = np.empty((n, d))
    for step in range(cfg.n_iters):
        Kmat = np.empty((cfg.n_pairs, m), dtype=np.intp)
        Lmat = np.empty((cfg.n_pairs, m), dtype=np.intp)
        for b in range(cfg.n_pairs):
            Kmat[b], Lmat[b] = sample_batch_pair(state, m, rng)
        XK = state.data[Kmat]
        XL = state.data[Lmat]
        vals, dXK, dXL, solve_diag = batch_divergence_grads(
            XK, XL, eps, cfg.sinkhorn_max_iters, cfg.sinkhorn_tol
        )
        diag.n_unconverged_solves += solve_diag["n_unconverged"]
        loss = float(vals.mean())
        if not np.isfinite(loss):
            raise LossDiverged(
                f"batch loss became non-finite at step {step}", diag.summary()
            )
        diag.loss_history.append(loss)

        grad.fill(0.0)
        np.add.at(grad, Kmat.reshape(-1), dXK.reshape(-1, d))
        np.add.at(grad, Lmat.reshape(-1), dXL.reshape(-1, d))
        grad /= cfg.n_pairs
        grad *= free
        rows = np.unique(np.concatenate([Kmat.reshape(-1), Lmat.reshape(-1)]))
        g = grad[rows]
        v[rows] = cfg.rho * v[rows] + (1.0 - cfg.rho) * g**2
        state.data[rows] -= cfg.step_size * g / (np.sqrt(v[rows]) + RMSPROP_DELTA)

        if holdout is not None and (step + 1) % cfg.monitor_every == 0:
            # truth is only known on observed entries; fill the rest with the
            # current imputations so W2 rows carry no NaN
            truth = np.where(mask == 1, values, state.data)
            report = evaluate(truth, state.data, ~holdout)
            diag.monitor_reports.append({"step": step + 1, **report.to_dict()})

    completed = np.where(mask == 1, values, state.data)
    diag.seconds = time.perf_counter() - t0
    return completed, diag


def impute_sinkhorn_direct(
    X: IncompleteMatrix, cfg: DirectConfig | None = None, rng=None
) -> np.ndarray:
    completed, _ = fit_direct(X, cfg, rng)
    return completed
