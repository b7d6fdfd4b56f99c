"""Round-robin parametric imputation trained on minibatch Sinkhorn divergences.

Columns are visited cyclically in increasing-missing-count order. For the
visited column j, a per-column model (linear or shallow MLP) re-imputes column
j of freshly sampled batches on the fly; the divergence gradient is
backpropagated only through those re-imputed entries into the model
parameters, which take Adam steps with l2 weight decay. After each column's
inner loop, its missing entries are overwritten with the model's predictions.

Fitted models are reusable out of sample: `rr_transform` initializes missing
entries with the training column means and runs prediction-only cycles with
frozen parameters.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from ..data import (
    IncompleteMatrix,
    initialize_imputation,
    observed_column_stats,
    resolve_batch_size,
    sample_batch_pair,
    sample_batch_pair_stratified,
)
from ..exceptions import FallbackToUniform, LossDiverged
from ..metrics import evaluate
from ..optim import adam_state, adam_step
from ..ot import batch_divergence_grads, median_heuristic_epsilon
from .direct import _monitor_holdout
from .mlp import (
    MlpColumnParams,
    init_mlp_params,
    mlp_forward,
    mlp_forward_backward,
    params_to_vector,
    vector_to_params,
)

SCHEMA_VERSION = 1
TRANSFORM_TOL = 1e-6
MODEL_KINDS = ("linear", "mlp")


@dataclass
class LinearColumnParams:
    weights: np.ndarray  # (d-1,)
    bias: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.bias = float(self.bias)
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias)):
            raise ValueError("linear parameters must be finite")


@dataclass
class RoundRobinConfig:
    """Training hyperparameters for the round-robin imputers.

    inner_steps is the per-column step count K within one cycle; mcar declares
    that stratified batch sampling (clean batch vs missing-on-j batch) is
    legitimate and should be used.
    """

    t_max: int = 10
    inner_steps: int = 50
    batch_size: int | None = None
    n_pairs: int = 10
    eta: float = 0.1
    epsilon: float | None = None
    median_fraction: float = 0.05
    step_size: float = 1e-2
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    sinkhorn_max_iters: int = 1000
    sinkhorn_tol: float = 1e-3
    mcar: bool = False
    monitor_fraction: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "RoundRobinConfig":
        return cls(**payload)


@dataclass
class RoundRobinModel:
    kind: str
    params: list
    visit_order: np.ndarray
    col_means: np.ndarray
    t_max: int
    d: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}")
        self.visit_order = np.asarray(self.visit_order, dtype=np.intp)
        self.col_means = np.asarray(self.col_means, dtype=np.float64)
        if len(self.params) != self.d:
            raise ValueError("one parameter block per column is required")
        if sorted(self.visit_order.tolist()) != list(range(self.d)):
            raise ValueError("visit_order must be a permutation of the columns")


@dataclass
class RoundRobinDiagnostics:
    epsilon: float
    batch_size: int
    loss_history: list = field(default_factory=list)
    cycle_losses: list = field(default_factory=list)
    n_unconverged_solves: int = 0
    n_stratified_fallbacks: int = 0
    monitor_reports: list = field(default_factory=list)
    seconds: float = 0.0

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "batch_size": self.batch_size,
            "final_cycle_loss": self.cycle_losses[-1] if self.cycle_losses else None,
            "n_unconverged_solves": self.n_unconverged_solves,
            "n_stratified_fallbacks": self.n_stratified_fallbacks,
            "seconds": self.seconds,
        }


def _init_params(kind: str, d: int, rng: np.random.Generator):
    # linear models start at the mean-prediction fixed point (all zeros);
    # MLPs get random hidden layers but a zeroed output layer for the same reason
    if kind == "linear":
        return [LinearColumnParams(np.zeros(d - 1), 0.0) for _ in range(d)]
    return [init_mlp_params(d - 1, rng) for _ in range(d)]


def _predict(kind: str, theta, Z: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return Z @ theta.weights + theta.bias
    return mlp_forward(theta, Z)


def _to_vector(kind: str, theta) -> np.ndarray:
    if kind == "linear":
        return np.concatenate([theta.weights, [theta.bias]])
    return params_to_vector(theta)


def _from_vector(kind: str, vec: np.ndarray, k: int):
    if kind == "linear":
        return LinearColumnParams(vec[:-1], vec[-1])
    return vector_to_params(vec, k)


def _decay_mask(kind: str, k: int) -> np.ndarray:
    """1 on weight entries, 0 on biases, matching the vectorized layout."""
    if kind == "linear":
        return np.concatenate([np.ones(k), [0.0]])
    parts = [
        np.ones(k * 2 * k),
        np.zeros(2 * k),
        np.ones(2 * k * k),
        np.zeros(k),
        np.ones(k),
        np.zeros(1),
    ]
    return np.concatenate(parts)


def _grad_vector(kind: str, theta, Z: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of sum_i upstream_i * prediction_i in the vectorized layout."""
    if kind == "linear":
        return np.concatenate([Z.T @ upstream, [upstream.sum()]])
    _, grads, _ = mlp_forward_backward(theta, Z, upstream)
    return params_to_vector(grads)


def rr_fit(
    X: IncompleteMatrix,
    model_kind: str = "linear",
    cfg: RoundRobinConfig | None = None,
    rng=None,
):
    """Fit the round-robin Sinkhorn imputer.

    X is expected in standardized units. Returns (completed matrix,
    RoundRobinModel, RoundRobinDiagnostics).
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
    if X.d < 2:
        raise ValueError("round-robin imputation needs at least 2 columns")
    cfg = cfg or RoundRobinConfig()
    if rng is None:
        rng = np.random.default_rng(0)
    elif not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    t0 = time.perf_counter()

    values, mask = X.values, X.mask
    d = X.d
    col_means, _ = observed_column_stats(values, mask)
    params = _init_params(model_kind, d, rng)

    holdout = None
    work = X
    if cfg.monitor_fraction > 0:
        monitor_rng = rng.spawn(1)[0]
        train_mask, holdout = _monitor_holdout(X, cfg.monitor_fraction, monitor_rng)
        work = IncompleteMatrix(
            np.where(X.mask == 1, values, 0.0), train_mask, X.column_names
        )

    missing_counts = (work.mask == 0).sum(axis=0)
    visit_order = np.argsort(missing_counts, kind="stable")

    if (work.mask == 1).all():
        model = RoundRobinModel(
            model_kind, params, visit_order, col_means, cfg.t_max, d, cfg.to_dict()
        )
        diag = RoundRobinDiagnostics(epsilon=0.0, batch_size=0)
        diag.seconds = time.perf_counter() - t0
        return values.copy(), model, diag

    state = initialize_imputation(work, cfg.eta, rng)
    n = state.n
    m = cfg.batch_size or resolve_batch_size(n)
    eps = cfg.epsilon or median_heuristic_epsilon(state.data, cfg.median_fraction)
    diag = RoundRobinDiagnostics(epsilon=eps, batch_size=m)

    k = d - 1
    decay = _decay_mask(model_kind, k)
    optimizers = [
        adam_state(decay.shape, cfg.step_size, cfg.beta1, cfg.beta2)
        for _ in range(d)
    ]
    data = state.data
    tmask = work.mask
    all_cols = np.arange(d)

    for cycle in range(cfg.t_max):
        cycle_losses = []
        for j in visit_order:
            mis_rows = np.flatnonzero(tmask[:, j] == 0)
            if mis_rows.size == 0:
                continue  # nothing to impute; theta_j keeps its mean prediction
            others = all_cols != j
            theta = params[j]
            for _ in range(cfg.inner_steps):
                Kmat = np.empty((cfg.n_pairs, m), dtype=np.intp)
                Lmat = np.empty((cfg.n_pairs, m), dtype=np.intp)
                for b in range(cfg.n_pairs):
                    if cfg.mcar:
                        try:
                            Kmat[b], Lmat[b] = sample_batch_pair_stratified(
                                state, m, j, rng
                            )
                            continue
                        except FallbackToUniform:
                            diag.n_stratified_fallbacks += 1
                    Kmat[b], Lmat[b] = sample_batch_pair(state, m, rng)
                XK = data[Kmat]
                XL = data[Lmat]
                misK = tmask[Kmat, j] == 0
                misL = tmask[Lmat, j] == 0
                nK = int(misK.sum())
                inputs = np.vstack([XK[misK][:, others], XL[misL][:, others]])
                if inputs.shape[0]:
                    preds = _predict(model_kind, theta, inputs)
                    XK[misK, j] = preds[:nK]
                    XL[misL, j] = preds[nK:]
                vals, dXK, dXL, sdiag = batch_divergence_grads(
                    XK, XL, eps, cfg.sinkhorn_max_iters, cfg.sinkhorn_tol
                )
                diag.n_unconverged_solves += sdiag["n_unconverged"]
                loss = float(vals.mean())
                if not np.isfinite(loss):
                    raise LossDiverged(
                        f"loss became non-finite on column {j}, cycle {cycle}",
                        diag.summary(),
                    )
                diag.loss_history.append(loss)
                cycle_losses.append(loss)
                upstream = np.concatenate([dXK[misK, j], dXL[misL, j]])
                upstream /= cfg.n_pairs
                gvec = _grad_vector(model_kind, theta, inputs, upstream)
                tvec = _to_vector(model_kind, theta)
                gvec += cfg.weight_decay * decay * tvec
                theta = _from_vector(
                    model_kind, adam_step(optimizers[j], tvec, gvec), k
                )
            params[j] = theta
            data[mis_rows, j] = _predict(
                model_kind, theta, data[mis_rows][:, others]
            )
        if cycle_losses:
            diag.cycle_losses.append(float(np.mean(cycle_losses)))
        if holdout is not None:
            truth = np.where(X.mask == 1, values, data)
            report = evaluate(truth, data, ~holdout)
            diag.monitor_reports.append({"cycle": cycle + 1, **report.to_dict()})

    model = RoundRobinModel(
        model_kind, params, visit_order, col_means, cfg.t_max, d, cfg.to_dict()
    )
    completed = np.where(mask == 1, values, data)
    diag.seconds = time.perf_counter() - t0
    return completed, model, diag


def rr_transform(model: RoundRobinModel, X_new: IncompleteMatrix) -> np.ndarray:
    """Impute new rows with frozen parameters (prediction-only cycles).

    X_new must be standardized with the training means/stds; its missing
    entries start at the training column means.
    """
    if X_new.d != model.d:
        raise ValueError(f"model expects {model.d} columns, data has {X_new.d}")
    mask = X_new.mask
    data = np.where(mask == 1, X_new.values, model.col_means)
    all_cols = np.arange(model.d)
    for _ in range(model.t_max):
        max_change = 0.0
        for j in model.visit_order:
            mis = mask[:, j] == 0
            if not mis.any():
                continue
            others = all_cols != j
            pred = _predict(model.kind, model.params[j], data[mis][:, others])
            max_change = max(max_change, float(np.abs(pred - data[mis, j]).max()))
            data[mis, j] = pred
        if max_change < TRANSFORM_TOL:
            break
    return data


def _params_payload(model: RoundRobinModel) -> list:
    if model.kind == "linear":
        return [
            {"weights": p.weights.tolist(), "bias": p.bias} for p in model.params
        ]
    return [
        {
            "W1": p.W1.tolist(),
            "b1": p.b1.tolist(),
            "W2": p.W2.tolist(),
            "b2": p.b2.tolist(),
            "W3": p.W3.tolist(),
            "b3": p.b3.tolist(),
        }
        for p in model.params
    ]


def _params_from_payload(kind: str, payload: list):
    if kind == "linear":
        return [LinearColumnParams(np.array(p["weights"]), p["bias"]) for p in payload]
    return [
        MlpColumnParams(
            np.array(p["W1"]),
            np.array(p["b1"]),
            np.array(p["W2"]),
            np.array(p["b2"]),
            np.array(p["W3"]),
            np.array(p["b3"]),
        )
        for p in payload
    ]


def save_model(model: RoundRobinModel, path) -> None:
    """Serialize a fitted model as a versioned JSON document."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": model.kind,
        "d": model.d,
        "t_max": model.t_max,
        "visit_order": model.visit_order.tolist(),
        "col_means": model.col_means.tolist(),
        "config": model.config,
        "columns": _params_payload(model),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> RoundRobinModel:
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version {version!r}")
    return RoundRobinModel(
        kind=doc["kind"],
        params=_params_from_payload(doc["kind"], doc["columns"]),
        visit_order=np.array(doc["visit_order"]),
        col_means=np.array(doc["col_means"]),
        t_max=doc["t_max"],
        d=doc["d"],
        config=doc.get("config", {}),
    )
