"""RMSprop and Adam steps used by the imputation loops, plus the
finite-difference oracle every gradient in this package is tested against."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    """Moment accumulators and settings for one owned parameter block.

    kind "rmsprop" uses beta2 as the squared-gradient decay rho and ignores
    the first moment; kind "adam" is standard bias-corrected Adam.
    """

    kind: str
    alpha: float
    v: np.ndarray
    m: np.ndarray | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    delta: float = 1e-8
    t: int = field(default=0)


def rmsprop_state(shape, alpha=1e-2, rho=0.9, delta=1e-8) -> OptimizerState:
    return OptimizerState("rmsprop", alpha, np.zeros(shape), None, 0.0, rho, delta)


def adam_state(shape, alpha=1e-2, beta1=0.9, beta2=0.999, delta=1e-8) -> OptimizerState:
    return OptimizerState(
        "adam", alpha, np.zeros(shape), np.zeros(shape), beta1, beta2, delta
    )


def _check_shapes(state: OptimizerState, params, grads):
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.v.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.v.shape}"
        )
    return params, grads


def rmsprop_step(state: OptimizerState, params, grads):
    """v <- rho v + (1 - rho) g^2; p <- p - alpha g / (sqrt(v) + delta)."""
    if state.kind != "rmsprop":
        raise ValueError(f"state holds a {state.kind} optimizer")
    params, grads = _check_shapes(state, params, grads)
    state.t += 1
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads**2
    return params - state.alpha * grads / (np.sqrt(state.v) + state.delta)


def adam_step(state: OptimizerState, params, grads):
    """Bias-corrected Adam update."""
    if state.kind != "adam":
        raise ValueError(f"state holds a {state.kind} optimizer")
    params, grads = _check_shapes(state, params, grads)
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads**2
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    return params - state.alpha * m_hat / (np.sqrt(v_hat) + state.delta)


def finite_diff_grad(f, x, h: float = 1e-5):
    """Central finite differences of a scalar function, coordinate by coordinate."""
    x = np.array(x, dtype=np.float64)  # private copy; f is re-evaluated on it
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        up = f(x)
        xf[i] = orig - h
        down = f(x)
        xf[i] = orig
        flat[i] = (up - down) / (2.0 * h)
    return grad
