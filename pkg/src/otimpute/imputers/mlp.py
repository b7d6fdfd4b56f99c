"""Shallow MLP used as a per-column imputer: (d-1) -> 2(d-1) -> (d-1) -> 1
with ReLU after the first two layers, written directly in numpy.

The backward pass is hand-derived and checked against central finite
differences in the test suite. ReLU's subgradient at exactly 0 is taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MlpColumnParams:
    W1: np.ndarray  # (k, 2k)
    b1: np.ndarray  # (2k,)
    W2: np.ndarray  # (2k, k)
    b2: np.ndarray  # (k,)
    W3: np.ndarray  # (k, 1)
    b3: np.ndarray  # (1,)

    def __post_init__(self):
        k = self.W1.shape[0]
        expected = {
            "W1": (k, 2 * k),
            "b1": (2 * k,),
            "W2": (2 * k, k),
            "b2": (k,),
            "W3": (k, 1),
            "b3": (1,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")
            setattr(self, name, arr)

    @property
    def input_width(self) -> int:
        return self.W1.shape[0]

    def copy(self) -> "MlpColumnParams":
        return MlpColumnParams(
            self.W1.copy(),
            self.b1.copy(),
            self.W2.copy(),
            self.b2.copy(),
            self.W3.copy(),
            self.b3.copy(),
        )


def init_mlp_params(k: int, rng: np.random.Generator) -> MlpColumnParams:
    """He-uniform hidden layers; the output layer starts at zero so the
    network initially predicts the bias (the column mean on centered data)."""
    lim1 = np.sqrt(6.0 / k)
    lim2 = np.sqrt(6.0 / (2 * k))
    return MlpColumnParams(
        W1=rng.uniform(-lim1, lim1, size=(k, 2 * k)),
        b1=np.zeros(2 * k),
        W2=rng.uniform(-lim2, lim2, size=(2 * k, k)),
        b2=np.zeros(k),
        W3=np.zeros((k, 1)),
        b3=np.zeros(1),
    )


def _forward(params: MlpColumnParams, X: np.ndarray):
    pre1 = X @ params.W1 + params.b1
    h1 = np.maximum(pre1, 0.0)
    pre2 = h1 @ params.W2 + params.b2
    h2 = np.maximum(pre2, 0.0)
    y = (h2 @ params.W3)[:, 0] + params.b3[0]
    return y, pre1, h1, pre2, h2


def mlp_forward(params: MlpColumnParams, X: np.ndarray) -> np.ndarray:
    """Predictions for a (m, d-1) input block; returns shape (m,)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != params.input_width:
        raise ValueError(f"expected {params.input_width} inputs, got {X.shape[1]}")
    return _forward(params, X)[0]


def mlp_forward_backward(params: MlpColumnParams, X: np.ndarray, upstream: np.ndarray):
    """Forward pass plus gradients of sum_i upstream_i * y_i.

    Args:
        X: (m, d-1) inputs; upstream: (m,) dLoss/dy at each output.
    Returns:
        (outputs (m,), MlpColumnParams-shaped gradients, input gradients (m, d-1)).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    upstream = np.asarray(upstream, dtype=np.float64).reshape(-1)
    if X.shape[0] != upstream.shape[0]:
        raise ValueError("one upstream gradient per input row is required")
    if X.shape[1] != params.input_width:
        raise ValueError(f"expected {params.input_width} inputs, got {X.shape[1]}")
    y, pre1, h1, pre2, h2 = _forward(params, X)

    dy = upstream[:, None]  # (m, 1)
    gW3 = h2.T @ dy
    gb3 = dy.sum(axis=0)
    dh2 = (dy @ params.W3.T) * (pre2 > 0)
    gW2 = h1.T @ dh2
    gb2 = dh2.sum(axis=0)
    dh1 = (dh2 @ params.W2.T) * (pre1 > 0)
    gW1 = X.T @ dh1
    gb1 = dh1.sum(axis=0)
    dX = dh1 @ params.W1.T
    grads = MlpColumnParams(gW1, gb1, gW2, gb2, gW3, gb3)
    return y, grads, dX


def params_to_vector(params: MlpColumnParams) -> np.ndarray:
    return np.concatenate(
        [
            params.W1.ravel(),
            params.b1,
            params.W2.ravel(),
            params.b2,
            params.W3.ravel(),
            params.b3,
        ]
    )


def vector_to_params(vec: np.ndarray, k: int) -> MlpColumnParams:
    sizes = [k * 2 * k, 2 * k, 2 * k * k, k, k, 1]
    shapes = [(k, 2 * k), (2 * k,), (2 * k, k), (k,), (k, 1), (1,)]
    parts, pos = [], 0
    for size, shape in zip(sizes, shapes):
        parts.append(np.asarray(vec[pos : pos + size]).reshape(shape))
        pos += size
    return MlpColumnParams(*parts)
