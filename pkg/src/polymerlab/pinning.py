"""Homogeneous pinning on the zero set of the difference walk ``D = S1 - S2``.

``D`` moves by -2, 0, +2 with probabilities 1/4, 1/2, 1/4 and the overlap
``L_n`` counts the times ``1 <= i <= n`` with ``D_i = 0``, so
``ln E[exp(t L_n)]`` only needs a one-dimensional recursion over ``D``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .polymer import all_paths

BRUTE_FORCE_MAX_N = 8
CORRELATION_LENGTHS = 50.0


def log_pinning_sequence(n: int, t: float, pinned_end: bool = False) -> np.ndarray:
    """``ln E exp(t L_m)`` for m = 1..n (entry ``m-1``).

    With ``pinned_end`` the expectation is restricted to ``D_m = 0``; that
    sequence is superadditive, while the free one is subadditive (the walk
    starts pinned at the origin), so ``(1/m) ln`` approaches ``F(t)`` from
    below and from above respectively.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if t < 0:
        raise ValueError("t must be nonnegative")
    out = np.zeros(n)
    if t == 0 and not pinned_end:
        return out
    # half-difference D/2 in [-n, n] at indices 1..2n+1, origin at n+1; ends stay 0
    v = np.zeros(2 * n + 3)
    v[n + 1] = 1.0
    nxt = np.empty_like(v)
    reward = math.exp(t)
    log_scale = 0.0
    for m in range(1, n + 1):
        nxt[1:-1] = 0.25 * (v[:-2] + v[2:]) + 0.5 * v[1:-1]
        nxt[0] = nxt[-1] = 0.0
        nxt[n + 1] *= reward
        s = float(nxt.max())
        v, nxt = nxt / s, v
        log_scale += math.log(s)
        out[m - 1] = log_scale + math.log(float(v[n + 1] if pinned_end else v.sum()))
    return out


def log_pinning(n: int, t: float) -> float:
    """``ln E^{x2} exp(t L_n(S1, S2))``."""
    return float(log_pinning_sequence(n, t)[-1])


def f_n(beta: float, n: int) -> float:
    """Replica comparison value ``(1/2n) ln E^{x2} exp(2 beta^2 L_n)``."""
    return log_pinning(n, 2.0 * beta * beta) / (2.0 * n)


def brute_force_pinning(n: int, t: float) -> float:
    """Same as :func:`log_pinning` by enumerating all ``4^n`` path pairs (n <= 8)."""
    if not 1 <= n <= BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to 1 <= n <= {BRUTE_FORCE_MAX_N}")
    p = all_paths(n)
    overlaps = (p[:, None, :] == p[None, :, :]).sum(axis=2).ravel()
    a = t * overlaps
    top = float(a.max())
    return top + math.log(float(np.exp(a - top).mean()))


def exact_free_energy(t: float) -> float:
    """Limit ``F(t)`` from renewal theory for the lazy difference walk.

    ``P(D_m = 0) = C(2m, m) 4^{-m}`` has generating function ``(1-s)^{-1/2}``,
    so the first-return generating function is ``1 - sqrt(1 - s)`` and ``F``
    solves ``1 - sqrt(1 - e^{-F}) = e^{-t}``.  Small ``t`` gives ``F ~ t^2``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    return -math.log1p(-(-math.expm1(-t)) ** 2)


@dataclass
class PinningCurve:
    t: float
    n_max: int
    values: list[tuple[int, float]] = field(default_factory=list)
    raw: float = 0.0
    slope: float = 0.0

    @property
    def f_hat(self) -> float:
        """Headline estimate: the two-point slope between n_max/2 and n_max."""
        return self.slope


def pinning_free_energy(t: float, n_max: int, record_every: int | None = None) -> PinningCurve:
    """Finite-size estimate of ``F(t) = lim (1/n) ln E exp(t L_n)``.

    Reports the raw ``(1/n_max) ln`` and the slope
    ``(ln_{n_max} - ln_{n_max/2}) / (n_max/2)``, which cancels the O(1)
    boundary term and is used as ``F_hat``.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if t < 0:
        raise ValueError("t must be nonnegative")
    curve = PinningCurve(t, n_max)
    if t == 0:
        curve.values = [(n_max, 0.0)]
        return curve
    if n_max * t * t < CORRELATION_LENGTHS:
        warnings.warn(
            f"n_max={n_max} spans fewer than {CORRELATION_LENGTHS:g} correlation lengths "
            f"at t={t}; F_hat is unreliable", RuntimeWarning, stacklevel=2)
    seq = log_pinning_sequence(n_max, t)
    half = n_max // 2
    every = record_every or max(1, n_max // 20)
    ms = sorted(set(range(every, n_max + 1, every)) | {half, n_max})
    curve.values = [(m, float(seq[m - 1] / m)) for m in ms]
    curve.raw = float(seq[-1] / n_max)
    curve.slope = float((seq[-1] - seq[half - 1]) / (n_max - half))
    return curve
