"""Entropic optimal transport kernel.

Log-domain (softmin) Sinkhorn iterations, the debiased divergence, analytic
gradients with respect to support points, and exact W2 through linear
assignment.

Cost convention, fixed repository-wide: cost matrices hold full squared
Euclidean distances, M[i, j] = ||x_i - y_j||^2. Gradients of <P, M> therefore
carry a factor 2: d/dx_i <P, M> = 2 * (sum_j P_ij * x_i - (P Y)_i). The
entropic cost is <P, M> + eps * sum_ij P_ij log P_ij.

Gradients use the envelope rule: transport plans are held fixed at their
converged values, so the entropy term contributes nothing and only the cost
term is differentiated. Correctness is enforced by finite-difference tests,
not assumed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import xlogy

from .exceptions import InvalidCost, InvalidWeights, SizeMismatch, TooLarge

EPSILON_FLOOR = 1e-6
W2_DEFAULT_CAP = 4096


@dataclass(frozen=True)
class SinkhornConfig:
    """Sinkhorn solver settings.

    epsilon is in squared-distance units. epsilon_rule selects between a fixed
    value ("absolute") and the data-driven median rule ("median_fraction"),
    where epsilon = median_fraction * median pairwise squared distance; the
    resolution happens via `resolve_epsilon` before solving.
    """

    epsilon: float | None = None
    max_iters: int = 1000
    tol: float = 1e-6
    epsilon_rule: str = "absolute"
    median_fraction: float = 0.05

    def __post_init__(self):
        if self.epsilon_rule not in ("absolute", "median_fraction"):
            raise ValueError(f"unknown epsilon_rule {self.epsilon_rule!r}")
        if self.epsilon_rule == "absolute":
            if self.epsilon is None or self.epsilon <= 0:
                raise ValueError("absolute rule needs epsilon > 0")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("tol must be positive and max_iters >= 1")

    def resolve_epsilon(self, data) -> "SinkhornConfig":
        """Return a concrete-epsilon config, applying the median rule if set."""
        if self.epsilon_rule == "absolute":
            return self
        eps = median_heuristic_epsilon(data, self.median_fraction)
        return replace(self, epsilon=eps, epsilon_rule="absolute")


@dataclass
class TransportResult:
    plan: np.ndarray
    f: np.ndarray
    g: np.ndarray
    cost: float
    iterations: int
    converged: bool


def pairwise_sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """M[i, j] = ||A[i] - B[j]||^2, clamped at 0 against rounding."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    sq = (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :]
    M = sq - 2.0 * (A @ B.T)
    np.maximum(M, 0.0, out=M)
    return M


def _batch_sq_dists(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Stacked squared-distance matrices for (B, m, d) point arrays."""
    sx = (X**2).sum(axis=2)
    sy = (Y**2).sum(axis=2)
    M = sx[:, :, None] + sy[:, None, :] - 2.0 * (X @ np.swapaxes(Y, 1, 2))
    np.maximum(M, 0.0, out=M)
    return M


def _check_weights(w: np.ndarray, size: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != size:
        raise InvalidWeights(f"expected {size} weights, got {w.shape[0]}")
    if (w < 0).any() or abs(w.sum() - 1.0) > 1e-8:
        raise InvalidWeights("weights must be nonnegative and sum to 1")
    return w


def _lse_inplace(T: np.ndarray, axis: int) -> np.ndarray:
    """logsumexp over one axis, consuming T as scratch; -inf entries are safe."""
    mx = T.max(axis=axis)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    T -= np.expand_dims(safe, axis)
    np.exp(T, out=T)
    return np.log(T.sum(axis=axis)) + safe


def _solve_log_sinkhorn(C, loga, logb, eps, max_iters, tol):
    """Log-domain Sinkhorn on stacked problems.

    Args:
        C: (B, n, m) cost tensor; loga: (B, n); logb: (B, m).
    Returns:
        (f, g, iterations, converged_mask). The returned potentials have exact
        column marginals; row-marginal violation is below tol for converged
        problems.
    """
    B, n, m = C.shape
    a = np.exp(loga)
    T = np.empty_like(C)

    def row_update(g):
        # f_i = -eps * LSE_j[(g_j - C_ij)/eps + log b_j]
        np.subtract(g[:, None, :], C, out=T)
        np.divide(T, eps, out=T)
        np.add(T, logb[:, None, :], out=T)
        return -eps * _lse_inplace(T, 2)

    def col_update(f):
        np.subtract(f[:, :, None], C, out=T)
        np.divide(T, eps, out=T)
        np.add(T, loga[:, :, None], out=T)
        return -eps * _lse_inplace(T, 1)

    g = np.zeros((B, m))
    f = row_update(g)
    g = col_update(f)
    iterations = 1
    converged = np.zeros(B, dtype=bool)
    while True:
        f_next = row_update(g)
        # with g updated last, (P 1)_i = a_i * exp((f_i - f_next_i)/eps)
        viol = np.max(a * np.abs(np.expm1((f - f_next) / eps)), axis=1)
        converged = viol < tol
        if converged.all() or iterations >= max_iters:
            break
        f = f_next
        g = col_update(f)
        iterations += 1
    return f, g, iterations, converged


def _plan_from_potentials(f, g, C, loga, logb, eps):
    return np.exp(
        (f[..., :, None] + g[..., None, :] - C) / eps
        + loga[..., :, None]
        + logb[..., None, :]
    )


def _primal_cost(P, C, eps):
    """<P, M> + eps * sum P log P, elementwise on (possibly stacked) plans."""
    axes = tuple(range(P.ndim - 2, P.ndim))
    return (P * C).sum(axis=axes) + eps * xlogy(P, P).sum(axis=axes)


def sinkhorn(a, b, M, cfg: SinkhornConfig) -> TransportResult:
    """Entropic OT between weighted point sets given their cost matrix."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise InvalidCost("cost matrix must be 2-d")
    if not np.isfinite(M).all():
        raise InvalidCost("cost matrix contains NaN or infinite entries")
    n, m = M.shape
    a = _check_weights(a, n)
    b = _check_weights(b, m)
    if cfg.epsilon is None:
        raise ValueError("sinkhorn needs a concrete epsilon; resolve_epsilon first")
    eps = float(cfg.epsilon)
    with np.errstate(divide="ignore"):
        loga = np.log(a)[None, :]
        logb = np.log(b)[None, :]
    f, g, iters, conv = _solve_log_sinkhorn(
        M[None], loga, logb, eps, cfg.max_iters, cfg.tol
    )
    plan = _plan_from_potentials(f, g, M[None], loga, logb, eps)[0]
    cost = float(_primal_cost(plan, M, eps))
    return TransportResult(plan, f[0], g[0], cost, iters, bool(conv[0]))


def entropic_cost(A, B, cfg: SinkhornConfig, wa=None, wb=None):
    """OT_eps between empirical measures on points A and B (uniform default)."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    wa = np.full(A.shape[0], 1.0 / A.shape[0]) if wa is None else wa
    wb = np.full(B.shape[0], 1.0 / B.shape[0]) if wb is None else wb
    return sinkhorn(wa, wb, pairwise_sq_dists(A, B), cfg)


def sinkhorn_divergence(alpha, beta, cfg: SinkhornConfig) -> float:
    """Debiased divergence OT(a, b) - (OT(a, a) + OT(b, b)) / 2.

    alpha/beta may be EmpiricalMeasure instances or plain point arrays
    (uniform weights).
    """
    pa, wa = _measure_parts(alpha)
    pb, wb = _measure_parts(beta)
    cfg = cfg.resolve_epsilon(np.vstack([pa, pb]))
    xy = entropic_cost(pa, pb, cfg, wa, wb).cost
    xx = entropic_cost(pa, pa, cfg, wa, wa).cost
    yy = entropic_cost(pb, pb, cfg, wb, wb).cost
    return xy - 0.5 * (xx + yy)


def _measure_parts(measure):
    points = getattr(measure, "points", None)
    if points is not None:
        return np.asarray(points), np.asarray(measure.weights)
    points = np.atleast_2d(np.asarray(measure, dtype=np.float64))
    return points, np.full(points.shape[0], 1.0 / points.shape[0])


def _self_grad(P, X):
    """Gradient of <P, M(X, X)> w.r.t. X with the plan fixed.

    x_k appears as both row and column point:
    d/dx_k = 2 * [(r_k + c_k) x_k - (P X)_k - (P^T X)_k].
    """
    r = P.sum(axis=-1)
    c = P.sum(axis=-2)
    return 2.0 * (
        (r + c)[..., :, None] * X - P @ X - np.swapaxes(P, -1, -2) @ X
    )


def _cross_grads(P, X, Y):
    r = P.sum(axis=-1)
    c = P.sum(axis=-2)
    dX = 2.0 * (r[..., :, None] * X - P @ Y)
    dY = 2.0 * (c[..., :, None] * Y - np.swapaxes(P, -1, -2) @ X)
    return dX, dY


def divergence_value_and_grad(X_K, X_L, cfg: SinkhornConfig):
    """S_eps(mu(X_K), mu(X_L)) with envelope gradients for both point sets.

    Uniform weights; the two batches may have different sizes. Returns
    (value, dX_K, dX_L, diagnostics) where diagnostics carries convergence
    flags of the three solves.
    """
    X_K = np.atleast_2d(np.asarray(X_K, dtype=np.float64))
    X_L = np.atleast_2d(np.asarray(X_L, dtype=np.float64))
    cfg = cfg.resolve_epsilon(np.vstack([X_K, X_L]))
    eps = cfg.epsilon
    xy = entropic_cost(X_K, X_L, cfg)
    xx = entropic_cost(X_K, X_K, cfg)
    yy = entropic_cost(X_L, X_L, cfg)
    value = xy.cost - 0.5 * (xx.cost + yy.cost)
    dK_cross, dL_cross = _cross_grads(xy.plan, X_K, X_L)
    dX_K = dK_cross - 0.5 * _self_grad(xx.plan, X_K)
    dX_L = dL_cross - 0.5 * _self_grad(yy.plan, X_L)
    diag = {
        "converged": xy.converged and xx.converged and yy.converged,
        "iterations": (xy.iterations, xx.iterations, yy.iterations),
        "epsilon": eps,
    }
    return value, dX_K, dX_L, diag


def grad_divergence_points(
    X_K, X_L, cfg: SinkhornConfig, missing_mask_K=None, missing_mask_L=None
):
    """Envelope gradient of the debiased divergence w.r.t. each point.

    Optional coordinate masks (1 = free/missing) zero the gradient at observed
    coordinates before returning.
    """
    _, dX_K, dX_L, _ = divergence_value_and_grad(X_K, X_L, cfg)
    if missing_mask_K is not None:
        dX_K = dX_K * np.asarray(missing_mask_K)
    if missing_mask_L is not None:
        dX_L = dX_L * np.asarray(missing_mask_L)
    return dX_K, dX_L


def batch_divergence_grads(XK: np.ndarray, XL: np.ndarray, eps, max_iters, tol):
    """Divergence values and gradients for B same-size batch pairs at once.

    The 3B entropic problems (cross, self-K, self-L per pair) are stacked into
    a single log-domain solve; all measures are uniform.

    Args:
        XK, XL: (B, m, d) stacked batches.
    Returns:
        (values (B,), dXK (B, m, d), dXL (B, m, d), diag dict).
    """
    B, m, _ = XK.shape
    C = np.concatenate(
        [_batch_sq_dists(XK, XL), _batch_sq_dists(XK, XK), _batch_sq_dists(XL, XL)]
    )
    logw = np.full((3 * B, m), -np.log(m))
    f, g, iters, conv = _solve_log_sinkhorn(C, logw, logw, eps, max_iters, tol)
    P = _plan_from_potentials(f, g, C, logw, logw, eps)
    costs = _primal_cost(P, C, eps)
    values = costs[:B] - 0.5 * (costs[B : 2 * B] + costs[2 * B :])
    Pxy, Pxx, Pyy = P[:B], P[B : 2 * B], P[2 * B :]
    dK_cross, dL_cross = _cross_grads(Pxy, XK, XL)
    dXK = dK_cross - 0.5 * _self_grad(Pxx, XK)
    dXL = dL_cross - 0.5 * _self_grad(Pyy, XL)
    diag = {
        "iterations": iters,
        "n_unconverged": int(B * 3 - conv.sum()),
        "converged": bool(conv.all()),
    }
    return values, dXK, dXL, diag


def exact_w2(A: np.ndarray, B: np.ndarray, cap: int = W2_DEFAULT_CAP) -> float:
    """Exact squared-W2 between same-size uniform empirical measures.

    Solves the linear assignment problem on squared distances and returns the
    mean matched cost. Inputs larger than `cap` points are refused.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[0] != B.shape[0]:
        raise SizeMismatch(f"point sets have sizes {A.shape[0]} and {B.shape[0]}")
    if A.shape[0] > cap:
        raise TooLarge(A.shape[0], cap)
    M = pairwise_sq_dists(A, B)
    rows, cols = linear_sum_assignment(M)
    return float(M[rows, cols].mean())


def median_heuristic_epsilon(data, fraction: float = 0.05, max_rows: int = 1000):
    """epsilon = fraction * median pairwise squared distance between rows.

    Deterministically subsamples evenly spaced rows when n > max_rows; the
    result is floored at 1e-6 so degenerate (all-identical) data still yields
    a usable regularization.
    """
    X = getattr(data, "data", data)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    if n < 2:
        raise ValueError("median heuristic needs at least 2 rows")
    if n > max_rows:
        idx = np.unique(np.linspace(0, n - 1, max_rows).round().astype(int))
        X = X[idx]
        n = X.shape[0]
    M = pairwise_sq_dists(X, X)
    med = float(np.median(M[np.triu_indices(n, k=1)]))
    return max(fraction * med, EPSILON_FLOOR)


def dump_transport(result: TransportResult, out_dir, tag: str):
    """Debug helper: write a plan and its potentials as CSV files."""
    os.makedirs(out_dir, exist_ok=True)
    np.savetxt(os.path.join(out_dir, f"{tag}_plan.csv"), result.plan, delimiter=",")
    np.savetxt(
        os.path.join(out_dir, f"{tag}_potentials_f.csv"), result.f, delimiter=","
    )
    np.savetxt(
        os.path.join(out_dir, f"{tag}_potentials_g.csv"), result.g, delimiter=","
    )
