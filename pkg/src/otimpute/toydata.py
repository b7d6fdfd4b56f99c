"""Synthetic datasets for tests and desk-scale benchmarks: the classic 2-d
shapes plus Gaussian and low-rank matrix factories. All generators take an rng
and are deterministic under a fixed seed."""

from __future__ import annotations

import numpy as np


def _rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def half_moons(n: int, noise: float = 0.05, rng=0) -> np.ndarray:
    """Two interleaved half circles in 2-d."""
    rng = _rng(rng)
    n_top = n // 2
    n_bot = n - n_top
    t_top = rng.uniform(0.0, np.pi, n_top)
    t_bot = rng.uniform(0.0, np.pi, n_bot)
    top = np.column_stack([np.cos(t_top), np.sin(t_top)])
    bot = np.column_stack([1.0 - np.cos(t_bot), 0.5 - np.sin(t_bot)])
    X = np.vstack([top, bot])
    return X + noise * rng.standard_normal(X.shape)


def s_shape(n: int, noise: float = 0.05, rng=0) -> np.ndarray:
    """An S-shaped 2-d curve."""
    rng = _rng(rng)
    t = 3.0 * np.pi * (rng.uniform(0.0, 1.0, n) - 0.5)
    X = np.column_stack([np.sin(t), np.sign(t) * (np.cos(t) - 1.0)])
    return X + noise * rng.standard_normal(X.shape)


def two_circles(n: int, noise: float = 0.05, radius_ratio: float = 0.5, rng=0):
    """Two concentric circles, half the points on each."""
    rng = _rng(rng)
    n_out = n // 2
    n_in = n - n_out
    t_out = rng.uniform(0.0, 2.0 * np.pi, n_out)
    t_in = rng.uniform(0.0, 2.0 * np.pi, n_in)
    outer = np.column_stack([np.cos(t_out), np.sin(t_out)])
    inner = radius_ratio * np.column_stack([np.cos(t_in), np.sin(t_in)])
    X = np.vstack([outer, inner])
    return X + noise * rng.standard_normal(X.shape)


def gaussian_mixture_two(n: int, d: int = 2, separation: float = 4.0, rng=0):
    """Two identity-covariance Gaussian clusters split along the first axis."""
    rng = _rng(rng)
    X = rng.standard_normal((n, d))
    half = n // 2
    X[:half, 0] -= separation / 2.0
    X[half:, 0] += separation / 2.0
    return X


def correlated_gaussian(n: int, d: int, corr: float = 0.5, rng=0) -> np.ndarray:
    """Zero-mean Gaussian with equicorrelated unit-variance coordinates."""
    rng = _rng(rng)
    cov = np.full((d, d), corr)
    np.fill_diagonal(cov, 1.0)
    L = np.linalg.cholesky(cov)
    return rng.standard_normal((n, d)) @ L.T


def low_rank(n: int, d: int, rank: int, noise: float = 0.0, rng=0) -> np.ndarray:
    """U V^T with standard-normal factors plus optional Gaussian noise."""
    rng = _rng(rng)
    U = rng.standard_normal((n, rank))
    V = rng.standard_normal((d, rank))
    X = U @ V.T
    if noise > 0:
        X = X + noise * rng.standard_normal(X.shape)
    return X


SHAPES = {
    "half_moons": half_moons,
    "s_shape": s_shape,
    "two_circles": two_circles,
}
