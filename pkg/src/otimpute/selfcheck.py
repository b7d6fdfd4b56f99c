"""Fast invariant suite behind the `check` CLI verb.

Each check recomputes an independently-known answer (closed form, brute force,
hand calculation, or statistical band) and compares the library against it.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np
from scipy.special import expit

from . import metrics, optim, ot
from .data import ImputationState, IncompleteMatrix, sample_batch_pair
from .imputers.mlp import (
    init_mlp_params,
    mlp_forward,
    mlp_forward_backward,
    params_to_vector,
    vector_to_params,
)
from .masking import mar_logistic_mask, mcar_mask, mnar_quantile_mask


def _check_sinkhorn_closed_form():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        c = rng.uniform(0.1, 5.0)
        eps = rng.uniform(0.05, 2.0)
        M = np.array([[0.0, c], [c, 0.0]])
        cfg = ot.SinkhornConfig(epsilon=eps, tol=1e-12, max_iters=5000)
        res = ot.sinkhorn([0.5, 0.5], [0.5, 0.5], M, cfg)
        x = 0.5 * expit(c / eps)
        expected = np.array([[x, 0.5 - x], [0.5 - x, x]])
        worst = max(worst, float(np.abs(res.plan - expected).max()))
    return worst < 1e-8, f"max plan deviation {worst:.2e}"


def _check_divergence_self_zero():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((64, 5))
    cfg = ot.SinkhornConfig(epsilon=1.0, tol=1e-9, max_iters=2000)
    val = ot.sinkhorn_divergence(X, X, cfg)
    return abs(val) <= 1e-9, f"S(a,a) = {val:.2e}"


def _check_divergence_symmetry():
    rng = np.random.default_rng(13)
    A, B = rng.standard_normal((12, 3)), rng.standard_normal((12, 3))
    # the solve must be well below the 1e-10 assertion: the symmetry gap
    # tracks the marginal tolerance roughly one-to-one
    cfg = ot.SinkhornConfig(epsilon=0.7, tol=1e-12, max_iters=20000)
    gap = abs(ot.sinkhorn_divergence(A, B, cfg) - ot.sinkhorn_divergence(B, A, cfg))
    return gap < 1e-10, f"symmetry gap {gap:.2e}"


def _check_gradient_fd():
    rng = np.random.default_rng(17)
    XK = rng.standard_normal((8, 3))
    XL = rng.standard_normal((8, 3))
    cfg = ot.SinkhornConfig(epsilon=1.0, tol=1e-12, max_iters=10000)
    dK, _ = ot.grad_divergence_points(XK, XL, cfg)
    fd = optim.finite_diff_grad(
        lambda P: ot.sinkhorn_divergence(P, XL, cfg), XK, h=1e-5
    )
    rel = np.abs(dK - fd).max() / max(np.abs(fd).max(), 1e-12)
    return rel < 1e-4, f"max rel grad error {rel:.2e}"


def _check_w2_bruteforce():
    rng = np.random.default_rng(19)
    A, B = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    M = ot.pairwise_sq_dists(A, B)
    brute = min(
        sum(M[i, p] for i, p in enumerate(perm)) / 5.0
        for perm in permutations(range(5))
    )
    val = ot.exact_w2(A, B)
    return abs(val - brute) < 1e-10, f"assignment vs brute force gap {abs(val - brute):.2e}"


def _check_w2_sorted_1d():
    rng = np.random.default_rng(23)
    a, b = rng.standard_normal(20), rng.standard_normal(20)
    val = ot.exact_w2(a[:, None], b[:, None])
    sorted_cost = float(((np.sort(a) - np.sort(b)) ** 2).mean())
    return abs(val - sorted_cost) < 1e-10, f"1-d sorted-matching gap {abs(val - sorted_cost):.2e}"


def _check_mcar_calibration():
    rng = np.random.default_rng(29)
    mask = mcar_mask(1000, 10, 0.3, rng)
    rate = float((mask == 0).mean())
    band = 3.0 * np.sqrt(0.3 * 0.7 / mask.size)
    return abs(rate - 0.3) < band, f"rate {rate:.4f} vs 0.3 +/- {band:.4f}"


def _check_mar_inputs_observed():
    rng = np.random.default_rng(31)
    X = rng.standard_normal((400, 8))
    mask = mar_logistic_mask(X, 0.3, 0.3, np.random.default_rng(5))
    fully_observed = int((mask.min(axis=0) == 1).sum())
    import math

    return fully_observed >= math.ceil(0.3 * 8), f"{fully_observed} fully observed columns"


def _check_quantile_band():
    rng = np.random.default_rng(37)
    X = rng.standard_normal((2000, 3))
    mask = mnar_quantile_mask(X, 0.3, 0.25, 1.0, np.random.default_rng(6))
    ok = True
    for j in range(3):
        lo, hi = np.quantile(X[:, j], 0.25), np.quantile(X[:, j], 0.75)
        inside = (X[:, j] >= lo) & (X[:, j] <= hi)
        ok = ok and (mask[inside, j] == 1).all()
    return bool(ok), "no masked entries inside the quantile band"


def _check_optimizer_hand_values():
    st = optim.rmsprop_state((), alpha=0.01)
    p = optim.rmsprop_step(st, np.array(0.0), np.array(1.0))
    expected = -0.01 / (np.sqrt(0.1) + 1e-8)
    ok = abs(float(p) - expected) < 1e-15
    st2 = optim.adam_state((), alpha=0.01)
    p2 = optim.adam_step(st2, np.array(0.0), np.array(3.0))
    ok = ok and abs(float(p2) - (-0.01 * 3.0 / (3.0 + 1e-8))) < 1e-12
    return ok, "first-step RMSprop/Adam updates match hand calculation"


def _check_mlp_fd():
    rng = np.random.default_rng(41)
    params = init_mlp_params(3, rng)
    params.W3 = rng.standard_normal((3, 1))  # nonzero head so gradients flow
    X = rng.standard_normal((6, 3))
    upstream = rng.standard_normal(6)
    _, grads, _ = mlp_forward_backward(params, X, upstream)
    vec = params_to_vector(params)

    def f(v):
        return float(mlp_forward(vector_to_params(v, 3), X) @ upstream)

    fd = optim.finite_diff_grad(f, vec, h=1e-6)
    rel = np.abs(params_to_vector(grads) - fd).max() / max(np.abs(fd).max(), 1e-12)
    return rel < 1e-5, f"max rel MLP grad error {rel:.2e}"


def _check_metrics_loop_oracle():
    rng = np.random.default_rng(43)
    Xt = rng.standard_normal((10, 4))
    Xh = rng.standard_normal((10, 4))
    mask = (rng.random((10, 4)) > 0.3).astype(np.uint8)
    mask[0, 0] = 0  # guarantee a missing entry
    tot_abs, tot_sq, cnt = 0.0, 0.0, 0
    for i in range(10):
        for j in range(4):
            if mask[i, j] == 0:
                tot_abs += abs(Xt[i, j] - Xh[i, j])
                tot_sq += (Xt[i, j] - Xh[i, j]) ** 2
                cnt += 1
    ok = abs(metrics.mae(Xt, Xh, mask) - tot_abs / cnt) < 1e-12
    ok = ok and abs(metrics.rmse(Xt, Xh, mask) - np.sqrt(tot_sq / cnt)) < 1e-12
    return ok, "MAE/RMSE match the double-loop oracle"


def _check_batch_determinism():
    state = ImputationState(
        np.zeros((50, 3)), np.ones((50, 3), dtype=np.uint8), np.zeros(3), np.ones(3)
    )
    K1, L1 = sample_batch_pair(state, 16, np.random.default_rng(123))
    K2, L2 = sample_batch_pair(state, 16, np.random.default_rng(123))
    ok = (K1 == K2).all() and (L1 == L2).all()
    return bool(ok), "identical seeds give identical batch pairs"


def _check_median_heuristic():
    val = ot.median_heuristic_epsilon(np.array([[0.0], [1.0], [2.0]]))
    return abs(val - 0.05) < 1e-15, f"3-point example epsilon {val}"


CHECKS = [
    ("sinkhorn-2x2-closed-form", _check_sinkhorn_closed_form),
    ("divergence-self-zero", _check_divergence_self_zero),
    ("divergence-symmetry", _check_divergence_symmetry),
    ("divergence-gradient-finite-diff", _check_gradient_fd),
    ("exact-w2-brute-force", _check_w2_bruteforce),
    ("exact-w2-sorted-1d", _check_w2_sorted_1d),
    ("mcar-calibration", _check_mcar_calibration),
    ("mar-inputs-observed", _check_mar_inputs_observed),
    ("mnar-quantile-band", _check_quantile_band),
    ("optimizer-hand-values", _check_optimizer_hand_values),
    ("mlp-gradient-finite-diff", _check_mlp_fd),
    ("metrics-loop-oracle", _check_metrics_loop_oracle),
    ("batch-sampling-determinism", _check_batch_determinism),
    ("median-heuristic-example", _check_median_heuristic),
]


def run_selfcheck():
    """Run every check; returns a list of (name, passed, detail)."""
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
