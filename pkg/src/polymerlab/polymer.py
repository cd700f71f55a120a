"""Transfer-matrix engine for a single directed path in 1+1 dimensions.

Layer ``i`` of the recursion holds ``z_i(x) = E[exp(beta H_i(S)); S_i = x]``
on the ``i + 1`` admissible positions ``x = 2k - i``.  Every layer is divided
by its maximum and the logarithm of the factor is carried separately, so no
layer over- or underflows whatever ``beta`` is.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .env import EnvField, EnvModel, lam

BRUTE_FORCE_MAX_N = 14


@dataclass(frozen=True)
class WeightLayer:
    step: int
    weights: np.ndarray
    log_scale: float


def step_forward(z: np.ndarray) -> np.ndarray:
    """Push a layer of length m to length m+1 by one simple-walk step."""
    out = np.empty(z.size + 1)
    out[0] = 0.5 * z[0]
    out[-1] = 0.5 * z[-1]
    out[1:-1] = 0.5 * (z[:-1] + z[1:])
    return out


def step_backward(g: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`step_forward`: length m+1 back to length m."""
    return 0.5 * (g[:-1] + g[1:])


def _site_weights(eta: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    e = beta * eta
    top = float(e.max())
    return np.exp(e - top), top


def layers(field: EnvField, beta: float):
    """Yield the rescaled forward layers i = 1..n."""
    z = np.ones(1)
    log_scale = 0.0
    for i in range(1, field.n + 1):
        w, top = _site_weights(field.row(i), beta)
        z = step_forward(z) * w
        m = float(z.max())
        z /= m
        log_scale += top + math.log(m)
        yield WeightLayer(i, z, log_scale)


def log_partition(field: EnvField, beta: float) -> float:
    """``ln Z_n(beta) = ln E exp(beta H_n(S))``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return 0.0
    for layer in layers(field, beta):
        pass
    return layer.log_scale + math.log(float(layer.weights.sum()))


def log_w(field: EnvField, beta: float, model: EnvModel) -> float:
    """``ln W_n(beta) = ln Z_n(beta) - n lam(beta)``."""
    return log_partition(field, beta) - field.n * lam(model, beta)


def marginals(field: EnvField, beta: float) -> list[np.ndarray]:
    """Polymer-measure marginals ``P_{n,beta}(S_i = x)``; entry ``i-1`` indexes ``x = 2k - i``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    n = field.n
    fwd = [layer.weights.copy() for layer in layers(field, beta)]
    out = [None] * n
    b = np.ones(n + 1)
    for i in range(n, 0, -1):
        p = fwd[i - 1] * b
        out[i - 1] = p / p.sum()
        if i > 1:
            w, _ = _site_weights(field.row(i), beta)
            b = step_backward(b * w)
            b /= b.max()
    return out


def overlap_expectation(field: EnvField, beta: float) -> float:
    """Expected replica overlap ``E^{x2}_{n,beta} L_n = sum_{i,x} P(S_i = x)^2``."""
    return float(sum(np.dot(p, p) for p in marginals(field, beta)))


def all_paths(n: int) -> np.ndarray:
    """Positions ``S_1..S_n`` of all ``2^n`` paths, shape ``(2^n, n)``."""
    steps = np.array(list(itertools.product((-1, 1), repeat=n)), dtype=np.int64)
    return np.cumsum(steps, axis=1)


def path_energies(field: EnvField, paths: np.ndarray) -> np.ndarray:
    """``H_n(S)`` for each row of ``paths``."""
    n = field.n
    idx = (paths + np.arange(1, n + 1)) // 2
    return field.values[np.arange(n), idx].sum(axis=1)


def _logmeanexp(a: np.ndarray) -> float:
    top = float(a.max())
    return top + math.log(float(np.exp(a - top).mean()))


def brute_force_log_partition(field: EnvField, beta: float) -> float:
    """``ln Z_n`` by enumerating every path; refuses ``n > 14``."""
    if field.n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}")
    return _logmeanexp(beta * path_energies(field, all_paths(field.n)))
