"""Two replicas in a shared environment and the interpolation functional.

For one realization of the environment,

    phi(t, u) = (1/2n) ln E^{x2} exp(s H_n(S1, S2) - 2n lam(s) + u beta^2 L_n(S1, S2))

with ``s = sqrt(t) beta``, ``H_n(S1, S2) = H_n(S1) + H_n(S2)`` and ``L_n`` the
number of coincidences.  The pair recursion runs over position pairs
``(x1, x2)``; two linear accumulators carry ``E[H e^...]`` and ``E[L e^...]``
so the Gibbs averages of ``H_n`` and ``L_n`` come out of the same sweep.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .env import DomainError, EnvField, EnvModel, lam, lam_prime
from .mc import Ensemble, McEstimate, replicate_map
from .pinning import f_n
from .polymer import all_paths, path_energies

T_MIN = 0.05
BRUTE_FORCE_MAX_N = 7


@dataclass(frozen=True)
class InterpolationPoint:
    t: float
    u: float
    beta: float

    def __post_init__(self):
        if not 0 <= self.t <= 1:
            raise ValueError("t must lie in [0, 1]")
        if self.u < 0:
            raise ValueError("u must be nonnegative")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")

    @property
    def s(self) -> float:
        return math.sqrt(self.t) * self.beta

    def check(self, model: EnvModel) -> None:
        if self.s > model.mgf_bound / 2:
            raise DomainError(
                f"sqrt(t)*beta={self.s} exceeds B/2={model.mgf_bound / 2} for {model}")


@dataclass(frozen=True)
class ReplicaLayer:
    step: int
    weights: np.ndarray
    log_scale: float


@dataclass(frozen=True)
class ReplicaSweep:
    log_sum: float
    mean_h: float
    mean_l: float


def _pair_step(z: np.ndarray) -> np.ndarray:
    m = z.shape[0]
    a = np.zeros((m + 1, m))
    a[:-1] += z
    a[1:] += z
    b = np.zeros((m + 1, m + 1))
    b[:, :-1] += a
    b[:, 1:] += a
    return 0.25 * b


def sweep(field: EnvField, s: float, pin: float, accumulate: bool = True) -> ReplicaSweep:
    """Pair recursion for ``E^{x2} exp(s H_n(S1,S2) + pin L_n)``.

    Returns the log of that expectation together with the tilted averages of
    ``H_n`` and ``L_n``.
    """
    z = np.ones((1, 1))
    ah = np.zeros((1, 1))
    al = np.zeros((1, 1))
    log_scale = 0.0
    for i in range(1, field.n + 1):
        eta = field.row(i)
        h = eta[:, None] + eta[None, :]
        e = s * h
        e[np.diag_indices(i + 1)] += pin
        top = float(e.max())
        w = np.exp(e - top)
        z = _pair_step(z) * w
        if accumulate:
            ah = _pair_step(ah) * w + h * z
            al = _pair_step(al) * w
            al[np.diag_indices(i + 1)] += np.diag(z)
        m = float(z.max())
        z /= m
        if accumulate:
            ah /= m
            al /= m
        log_scale += top + math.log(m)
    total = float(z.sum())
    if not accumulate:
        return ReplicaSweep(log_scale + math.log(total), math.nan, math.nan)
    return ReplicaSweep(log_scale + math.log(total), float(ah.sum()) / total,
                        float(al.sum()) / total)


def phi(field: EnvField, pt: InterpolationPoint, model: EnvModel) -> float:
    """Interpolation functional for a single environment realization."""
    pt.check(model)
    n = field.n
    if pt.beta == 0 or (pt.t == 0 and pt.u == 0):
        return 0.0
    sw = sweep(field, pt.s, pt.u * pt.beta ** 2, accumulate=False)
    return (sw.log_sum - 2 * n * lam(model, pt.s)) / (2 * n)


def gibbs_observables(field: EnvField, pt: InterpolationPoint, model: EnvModel) -> tuple[float, float]:
    """Averages of ``H_n(S1,S2)`` and ``L_n(S1,S2)`` under the tilted pair measure."""
    pt.check(model)
    sw = sweep(field, pt.s, pt.u * pt.beta ** 2)
    return sw.mean_h, sw.mean_l


def dphi_du(field: EnvField, pt: InterpolationPoint, model: EnvModel) -> float:
    _, mean_l = gibbs_observables(field, pt, model)
    return pt.beta ** 2 * mean_l / (2 * field.n)


def _dphi_dt_from(sw: ReplicaSweep, pt: InterpolationPoint, model: EnvModel, n: int) -> float:
    return pt.beta / (4 * n * math.sqrt(pt.t)) * (sw.mean_h - 2 * n * lam_prime(model, pt.s))


def dphi_dt(field: EnvField, pt: InterpolationPoint, model: EnvModel, t_min: float = T_MIN) -> float:
    """t-derivative; the ``1/sqrt(t)`` factor makes it unavailable below ``t_min``."""
    if pt.t < t_min:
        raise DomainError(f"dphi_dt needs t >= t_min={t_min}, got t={pt.t}")
    pt.check(model)
    sw = sweep(field, pt.s, pt.u * pt.beta ** 2)
    return _dphi_dt_from(sw, pt, model, field.n)


def gap(field: EnvField, pt: InterpolationPoint, model: EnvModel, t_min: float = T_MIN) -> float:
    """``dphi_du - dphi_dt`` for one realization, from a single sweep."""
    if pt.t < t_min:
        raise DomainError(f"gap needs t >= t_min={t_min}, got t={pt.t}")
    pt.check(model)
    n = field.n
    sw = sweep(field, pt.s, pt.u * pt.beta ** 2)
    return pt.beta ** 2 * sw.mean_l / (2 * n) - _dphi_dt_from(sw, pt, model, n)


def brute_force_phi(field: EnvField, pt: InterpolationPoint, model: EnvModel) -> float:
    """``phi`` by enumerating all ``4^n`` path pairs (n <= 7)."""
    n = field.n
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}")
    p = all_paths(n)
    h = path_energies(field, p)
    overlaps = (p[:, None, :] == p[None, :, :]).sum(axis=2)
    a = (pt.s * (h[:, None] + h[None, :]) + pt.u * pt.beta ** 2 * overlaps).ravel()
    top = float(a.max())
    log_mean = top + math.log(float(np.exp(a - top).mean()))
    return (log_mean - 2 * n * lam(model, pt.s)) / (2 * n)


def brute_force_observables(field: EnvField, pt: InterpolationPoint) -> tuple[float, float]:
    n = field.n
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}")
    p = all_paths(n)
    h1 = path_energies(field, p)
    hh = (h1[:, None] + h1[None, :]).ravel()
    ll = (p[:, None, :] == p[None, :, :]).sum(axis=2).ravel()
    a = pt.s * hh + pt.u * pt.beta ** 2 * ll
    w = np.exp(a - a.max())
    return float(np.dot(w, hh) / w.sum()), float(np.dot(w, ll) / w.sum())


# ---------------------------------------------------------------------------
# Environment-averaged checks
# ---------------------------------------------------------------------------

def _gap_task(r, model, n, seed, points):
    from .env import sample_field
    fld = sample_field(model, n, seed, r)
    return [gap(fld, pt, model) for pt in points]


def fkg_gap(ens: Ensemble, points, model: EnvModel) -> list[McEstimate]:
    """Estimate ``E[dphi_du - dphi_dt]`` at each point; the same fields serve every point.

    The comparison lemma behind this check needs ``Var(eta) < 1``; for other
    models the estimates are still produced but a warning is issued.
    """
    points = list(points)
    if model.variance >= 1:
        warnings.warn(f"{model} has variance {model.variance} >= 1; the sign of the "
                      "gap is not asserted", RuntimeWarning, stacklevel=2)
    for pt in points:
        if pt.t < T_MIN:
            raise DomainError(f"fkg_gap needs t >= {T_MIN}, got {pt.t}")
        pt.check(model)
    vals = replicate_map(_gap_task, ens.replicates, ens.workers,
                         model=model, n=ens.n, seed=ens.seed, points=points)
    return [McEstimate.from_samples(vals[:, j], ens.seed) for j in range(len(points))]


def _path_task(r, model, n, seed, t, beta):
    from .env import sample_field
    fld = sample_field(model, n, seed, r)
    return [phi(fld, InterpolationPoint(t, 2.0 - t, beta), model)]


def path_check(ens: Ensemble, t: float, beta: float, model: EnvModel) -> McEstimate:
    """Estimate ``E[phi(t, 2-t)] - phi(0, 2)``; the second term is environment free."""
    InterpolationPoint(t, 2.0 - t, beta).check(model)
    if t == 0:
        return McEstimate(0.0, 0.0, ens.replicates, ens.seed)
    vals = replicate_map(_path_task, ens.replicates, ens.workers,
                         model=model, n=ens.n, seed=ens.seed, t=t, beta=beta)
    return McEstimate.from_samples(vals[:, 0] - f_n(beta, ens.n), ens.seed)
