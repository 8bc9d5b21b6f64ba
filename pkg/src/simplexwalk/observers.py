"""Named statistics evaluated on batches of padded states.

A padded state is ``[x_0, x_1, ..., x_n]``; a batch has shape (..., n+1).
Names understood by :func:`resolve`:

    f<j>        eigen-statistic  sum_k sin(j pi k / n) (x_k - k)
    x<k>        coordinate k;  ``xlast`` is x_{n-1}
    min_grad    smallest increment x_k - x_{k-1}, k = 1..n
    max_grad    largest increment
    W<K>        centered height of the special particles floor(i n / K)
    sum         sum of x_1..x_{n-1}
"""
from __future__ import annotations

import re

import numpy as np

__all__ = ["resolve", "evaluate", "special_particles", "eigen_weights"]

_PATTERNS = [
    (re.compile(r"f(\d+)$"), "eigen"),
    (re.compile(r"x(\d+)$"), "coord"),
    (re.compile(r"W(\d+)$"), "special"),
]


def eigen_weights(j: int, n: int) -> np.ndarray:
    k = np.arange(1, n)
    return np.sin(j * np.pi * k / n)


def special_particles(n: int, K: int) -> np.ndarray:
    """Labels ``floor(i n / K)`` for i = 1..K-1."""
    if not 2 <= K <= n:
        raise ValueError(f"K must lie in 2..{n}, got {K}")
    return np.array([(i * n) // K for i in range(1, K)], dtype=np.int64)


def resolve(name: str, n: int):
    """Vectorized function for the statistic ``name`` at size ``n``."""
    if name == "xlast":
        return lambda X: X[..., n - 1]
    if name == "min_grad":
        return lambda X: np.diff(X, axis=-1).min(axis=-1)
    if name == "max_grad":
        return lambda X: np.diff(X, axis=-1).max(axis=-1)
    if name == "sum":
        return lambda X: X[..., 1:n].sum(axis=-1)
    for pat, kind in _PATTERNS:
        m = pat.match(name)
        if not m:
            continue
        v = int(m.group(1))
        if kind == "eigen":
            if not 1 <= v <= n - 1:
                raise ValueError(f"{name}: mode index must lie in 1..{n - 1}")
            w = eigen_weights(v, n)
            k = np.arange(1, n, dtype=np.float64)
            return lambda X: (X[..., 1:n] - k) @ w
        if kind == "coord":
            if not 1 <= v <= n - 1:
                raise ValueError(f"{name}: coordinate must lie in 1..{n - 1}")
            return lambda X: X[..., v]
        u = special_particles(n, v)
        return lambda X: (X[..., u] - u).sum(axis=-1)
    raise ValueError(f"unknown statistic {name!r}")


def evaluate(names, X: np.ndarray) -> np.ndarray:
    """Stack the statistics ``names`` of batch ``X`` along a new last axis."""
    n = X.shape[-1] - 1
    if not names:
        return np.empty(X.shape[:-1] + (0,))
    return np.stack([resolve(s, n)(X) for s in names], axis=-1)
