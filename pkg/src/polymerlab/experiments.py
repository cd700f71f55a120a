"""Environment-averaged experiments on the normalized free energy.

Every check returns a :class:`CheckResult` carrying the estimate, its
standard error and the signed margin; ``passed`` is ``margin >= 0``.  The
statistical allowance is ``SIGMAS`` standard errors throughout, one-sided
for inequalities.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .env import DomainError, EnvModel, Gaussian, ScaledModel, lam, lemma_c, sample_field
from .mc import McEstimate, replicate_map
from .pinning import f_n
from .polymer import log_partition, log_w, overlap_expectation

SIGMAS = 3.0
SCALING_CORRELATION_LENGTHS = 50.0
SCALING_N_CAP = 4096
DEFAULT_SCALING_BETAS = (0.6, 0.8, 1.0, 1.2)


@dataclass
class CheckResult:
    name: str
    params: dict
    estimate: float
    stderr: float
    bound: float
    margin: float
    passed: bool
    note: str = ""

    def row(self) -> dict:
        return {"check": self.name, **self.params, "estimate": self.estimate,
                "stderr": self.stderr, "bound": self.bound, "margin": self.margin,
                "passed": self.passed}


def _at_least(name, params, est, se, bound, note=""):
    margin = est - bound + SIGMAS * se
    return CheckResult(name, params, est, se, bound, margin, margin >= 0, note)


def _at_most(name, params, est, se, bound, note=""):
    margin = bound - est + SIGMAS * se
    return CheckResult(name, params, est, se, bound, margin, margin >= 0, note)


# ---------------------------------------------------------------------------
# replicate tasks (module level so worker processes can import them)
# ---------------------------------------------------------------------------

def _log_w_task(r, model, betas, n, seed):
    fld = sample_field(model, n, seed, r)
    return [log_w(fld, b, model) / n for b in betas]


def _log_z_task(r, model, beta, n, seed):
    return [log_partition(sample_field(model, n, seed, r), beta) / n]


def _derivative_task(r, model, beta, n, seed, h):
    fld = sample_field(model, n, seed, r)
    fd = (log_w(fld, beta + h, model) - log_w(fld, beta - h, model)) / (2 * h * n)
    return [fd, overlap_expectation(fld, beta) * beta / n]


# ---------------------------------------------------------------------------
# free energy
# ---------------------------------------------------------------------------

def pn_samples(model: EnvModel, betas, n: int, replicates: int, seed: int,
               workers: int = 1) -> np.ndarray:
    """``(1/n) ln W_n(beta)`` per replicate (rows) and beta (columns), common fields."""
    betas = [float(b) for b in betas]
    for b in betas:
        lam(model, b)
    return replicate_map(_log_w_task, replicates, workers,
                         model=model, betas=betas, n=n, seed=seed)


def estimate_pn(model: EnvModel, beta: float, n: int, replicates: int, seed: int,
                workers: int = 1) -> McEstimate:
    """Estimate ``p_n(beta) = (1/n) E ln W_n(beta)``."""
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    if beta == 0:
        return McEstimate(0.0, 0.0, replicates, seed)
    vals = pn_samples(model, [beta], n, replicates, seed, workers)
    return McEstimate.from_samples(vals[:, 0], seed)


def wat_check(model: EnvModel, beta: float, n: int, replicates: int, seed: int,
              workers: int = 1) -> CheckResult:
    """Compare ``p_n(beta)`` with ``(1 - e^c) F_n(beta)``.

    ``c`` is :func:`lemma_c` at ``B = 2 beta``, the smallest bound for which
    ``beta <= B/2``.
    """
    if beta > model.mgf_bound / 2:
        raise DomainError(f"beta={beta} exceeds B/2={model.mgf_bound / 2}")
    c = lemma_c(model, 2 * beta)
    fn = f_n(beta, n)
    rhs = -math.expm1(c) * fn
    est = estimate_pn(model, beta, n, replicates, seed, workers)
    params = {"model": str(model), "beta": beta, "n": n, "M": replicates, "seed": seed,
              "c": c, "F_n": fn}
    note = "" if model.variance < 1 else "variance >= 1: outside the lemma's hypothesis"
    return _at_least("wat", params, est.mean, est.stderr, rhs, note)


def mean_w_check(model: EnvModel, beta: float, n: int, replicates: int, seed: int,
                 workers: int = 1) -> CheckResult:
    """``E W_n = 1``: two-sided, 4 standard errors."""
    vals = np.exp(pn_samples(model, [beta], n, replicates, seed, workers)[:, 0] * n)
    est = McEstimate.from_samples(vals, seed)
    margin = 4.0 * est.stderr - abs(est.mean - 1.0)
    return CheckResult("mean_w", {"model": str(model), "beta": beta, "n": n,
                                  "M": replicates, "seed": seed},
                       est.mean, est.stderr, 1.0, margin, margin >= 0)


def superadditivity_check(model: EnvModel, beta: float, ns, replicates: int, seed: int,
                          workers: int = 1) -> list[CheckResult]:
    """``p_n`` should not decrease along ``ns``."""
    ests = [estimate_pn(model, beta, n, replicates, seed, workers) for n in ns]
    out = []
    for (n0, a), (n1, b) in zip(zip(ns, ests), zip(ns[1:], ests[1:])):
        se = math.hypot(a.stderr, b.stderr)
        out.append(_at_least("superadditivity",
                             {"model": str(model), "beta": beta, "n": n1, "n_prev": n0,
                              "M": replicates, "seed": seed},
                             b.mean - a.mean, se, 0.0))
    return out


# ---------------------------------------------------------------------------
# beta^4 scaling
# ---------------------------------------------------------------------------

def scaling_length(beta: float, cap: int = SCALING_N_CAP) -> int:
    return min(math.ceil(SCALING_CORRELATION_LENGTHS / beta ** 4), cap)


@dataclass
class ScalingResult:
    points: list[tuple[float, int, McEstimate]]
    slope: float
    intercept: float
    slope_stderr: float
    excluded: list[float] = field(default_factory=list)
    caveat: str = ("p_n <= p_- for every n (superadditivity), so each point "
                   "overstates |p_-| and the slope carries finite-n bias")

    @property
    def slope_ci(self) -> tuple[float, float]:
        return self.slope - 1.96 * self.slope_stderr, self.slope + 1.96 * self.slope_stderr

    @property
    def prefactor(self) -> float:
        """Fitted ``C`` in ``-p ~ C beta^slope``."""
        return math.exp(self.intercept)


def fit_power_law(betas, means, stderrs) -> tuple[float, float, float]:
    """Unweighted least squares of ``ln(-mean)`` on ``ln beta``.

    The slope error propagates each point's ``stderr/|mean|`` (delta method).
    """
    x = np.log(np.asarray(betas, dtype=float))
    y = np.log(-np.asarray(means, dtype=float))
    if x.size < 2 or np.ptp(x) == 0:
        raise ValueError("power-law fit needs at least two distinct betas")
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    slope = float(np.dot(xc, y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    var_y = (np.asarray(stderrs, dtype=float) / np.abs(means)) ** 2
    slope_se = math.sqrt(float(np.dot(xc * xc, var_y)) / sxx ** 2)
    return slope, intercept, slope_se


def scaling_fit(model: EnvModel, betas=DEFAULT_SCALING_BETAS, replicates: int = 400,
                seed: int = 0, workers: int = 1, n_cap: int = SCALING_N_CAP,
                n_factor: int = 1) -> ScalingResult:
    """Fit the exponent of ``-p_n(beta)`` with ``n(beta) = ceil(50/beta^4)``.

    ``n_factor`` multiplies every length (stability runs).
    """
    betas = [float(b) for b in betas]
    if len(set(betas)) < 2:
        raise ValueError("scaling fit refused: needs at least two distinct betas")
    points, excluded = [], []
    for b in betas:
        n = scaling_length(b, n_cap) * n_factor
        est = estimate_pn(model, b, n, replicates, seed, workers)
        points.append((b, n, est))
        if not est.mean < 0:
            excluded.append(b)
            warnings.warn(f"p_n({b}) estimate {est.mean} is not negative; point excluded",
                          RuntimeWarning, stacklevel=2)
    kept = [(b, e) for b, _, e in points if b not in excluded]
    if len(kept) < 2:
        raise ValueError("scaling fit refused: fewer than two negative estimates")
    slope, intercept, se = fit_power_law([b for b, _ in kept], [e.mean for _, e in kept],
                                         [e.stderr for _, e in kept])
    return ScalingResult(points, slope, intercept, se, excluded)


# ---------------------------------------------------------------------------
# monotonicity in beta
# ---------------------------------------------------------------------------

@dataclass
class MonotonicityReport:
    betas: list[float]
    estimates: list[McEstimate]
    checks: list[CheckResult]
    paired_stderr: list[float]
    realization_monotone: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def monotonicity_check(model: EnvModel, betas, n: int, replicates: int, seed: int,
                       workers: int = 1) -> MonotonicityReport:
    """``p_n(beta)`` on an increasing grid, one set of fields for every beta.

    Each step passes when the increase is below ``3 * sqrt(se1^2 + se2^2)``.
    The paired standard error and the fraction of realizations that are
    monotone are diagnostics only.
    """
    betas = [float(b) for b in betas]
    if any(b1 <= b0 for b0, b1 in zip(betas, betas[1:])):
        raise ValueError("betas must be strictly increasing")
    vals = pn_samples(model, betas, n, replicates, seed, workers)
    ests = [McEstimate.from_samples(vals[:, j], seed) for j in range(len(betas))]
    checks, paired = [], []
    for j in range(1, len(betas)):
        a, b = ests[j - 1], ests[j]
        diff = vals[:, j] - vals[:, j - 1]
        paired.append(float(diff.std(ddof=1) / math.sqrt(replicates)))
        checks.append(_at_most("monotonicity",
                               {"model": str(model), "beta": betas[j], "beta_prev": betas[j - 1],
                                "n": n, "M": replicates, "seed": seed},
                               b.mean - a.mean, math.hypot(a.stderr, b.stderr), 0.0))
    mono = float(np.mean(np.all(np.diff(vals, axis=1) <= 0, axis=1)))
    return MonotonicityReport(betas, ests, checks, paired, mono)


# ---------------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------------

def concentration_bound(x, n: int, k: float) -> np.ndarray:
    """``exp(-n x^2 / 4K)`` for ``x <= 2K`` and ``exp(-n (x - K))`` beyond."""
    x = np.asarray(x, dtype=float)
    if k <= 0:
        return np.exp(-n * x)
    return np.where(x <= 2 * k, np.exp(-n * x * x / (4 * k)), np.exp(-n * (x - k)))


def _required_k(x: float, freq: float, n: int) -> float:
    # smallest K >= 0 with concentration_bound(x, n, K) >= freq; the bound increases in K
    if freq <= 0:
        return 0.0
    if freq >= 1:
        return math.inf
    k1 = n * x * x / (-4.0 * math.log(freq))
    if x <= 2 * k1:
        return k1
    return max(0.0, x + math.log(freq) / n)


def _required_k_gaussian(x: float, freq: float, n: int) -> float:
    # smallest K with exp(-n x^2 / 4K) >= freq
    if freq <= 0:
        return 0.0
    if freq >= 1:
        return math.inf
    return n * x * x / (-4.0 * math.log(freq))


@dataclass
class TailReport:
    """Tail frequencies of the centered free energy at one ``(n, beta)``.

    ``k_hat`` fits the sub-Gaussian curve ``exp(-n x^2 / 4K)`` alone;
    ``k_hat_piecewise`` fits the two-regime bound, which at small ``n x`` can
    hold for every ``K`` and then reports 0.
    """

    n: int
    beta: float
    x: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    k_hat: float
    k_hat_piecewise: float
    reference: np.ndarray
    n_var: float
    dominated: bool

    def rows(self):
        for x, up, lo, ref in zip(self.x, self.upper, self.lower, self.reference):
            yield {"n": self.n, "beta": self.beta, "x": float(x), "upper": float(up),
                   "lower": float(lo), "reference": float(ref), "k_hat": self.k_hat,
                   "k_hat_piecewise": self.k_hat_piecewise}


def log_z_samples(model, beta, n, replicates, seed, workers=1) -> np.ndarray:
    """``(1/n) ln Z_n(beta)`` per replicate."""
    return replicate_map(_log_z_task, replicates, workers,
                         model=model, beta=beta, n=n, seed=seed)[:, 0]


def concentration_tails(model: EnvModel, beta: float, n: int, replicates: int, seed: int,
                        workers: int = 1, grid_points: int = 25) -> TailReport:
    """Empirical tails of ``±((1/n) ln Z_n - mean)`` and the fitted constant ``K_hat``."""
    if replicates < 1000:
        warnings.warn("fewer than 1000 replicates: tail frequencies are coarse",
                      RuntimeWarning, stacklevel=2)
    y = log_z_samples(model, beta, n, replicates, seed, workers)
    y = y - y.mean()
    x = np.linspace(0.0, float(np.abs(y).max()), grid_points)
    upper = np.array([np.mean(y > v) for v in x])
    lower = np.array([np.mean(-y > v) for v in x])
    pairs = [(float(v), float(f)) for v, fu, fl in zip(x[1:], upper[1:], lower[1:])
             for f in (fu, fl)]
    k_hat = max(_required_k_gaussian(v, f, n) for v, f in pairs)
    k_pw = max(_required_k(v, f, n) for v, f in pairs)
    ref = np.exp(-n * x * x / (4 * k_hat)) if k_hat > 0 else (x == 0).astype(float)
    # relative slack absorbs rounding in exp(log(freq))
    slack = 1e-12
    dominated = bool(np.all(ref * (1 + slack) >= upper) and np.all(ref * (1 + slack) >= lower))
    return TailReport(n, beta, x, upper, lower, k_hat, k_pw, ref, float(n * y.var(ddof=1)), dominated)


def variance_scaling(model: EnvModel, beta: float, ns=(32, 64), replicates: int = 2000,
                     seed: int = 0, workers: int = 1, factor: float = 2.5) -> CheckResult:
    """``n Var[(1/n) ln Z_n]`` at two lengths should agree within ``factor``."""
    n0, n1 = ns
    v0 = n0 * float(np.var(log_z_samples(model, beta, n0, replicates, seed, workers), ddof=1))
    v1 = n1 * float(np.var(log_z_samples(model, beta, n1, replicates, seed, workers), ddof=1))
    ratio = v1 / v0
    margin = math.log(factor) - abs(math.log(ratio))
    return CheckResult("variance_scaling",
                       {"model": str(model), "beta": beta, "n": n1, "n_prev": n0,
                        "M": replicates, "seed": seed, "n_var_prev": v0, "n_var": v1},
                       ratio, math.nan, factor, margin, margin >= 0)


# ---------------------------------------------------------------------------
# derivative identity
# ---------------------------------------------------------------------------

def _is_gaussian(model: EnvModel) -> bool:
    base = model.base if isinstance(model, ScaledModel) else model
    return isinstance(base, Gaussian)


def gaussian_equality_check(beta: float, n: int, replicates: int, seed: int,
                            model: EnvModel | None = None, h: float = 0.02,
                            workers: int = 1) -> CheckResult:
    """Finite-difference ``p_n'(beta)`` against ``-(c beta / n) E<L_n>``.

    Both sides are evaluated on the same fields.  For a Gaussian environment
    ``c`` is the variance and the two sides must agree (two-sided, paired
    standard error).  Otherwise ``c = lemma_c(model, 2 beta)`` and only
    ``p_n' >= -(c beta / n) E<L_n>`` is checked.
    """
    model = Gaussian(1.0) if model is None else model
    if beta - h < 0:
        raise ValueError("beta must exceed the finite-difference step")
    lam(model, beta + h)
    vals = replicate_map(_derivative_task, replicates, workers,
                         model=model, beta=beta, n=n, seed=seed, h=h)
    gaussian = _is_gaussian(model)
    c = model.variance if gaussian else lemma_c(model, 2 * beta)
    fd = McEstimate.from_samples(vals[:, 0], seed)
    ov = McEstimate.from_samples(-c * vals[:, 1], seed)
    diff = McEstimate.from_samples(vals[:, 0] + c * vals[:, 1], seed)
    params = {"model": str(model), "beta": beta, "n": n, "M": replicates, "seed": seed,
              "h": h, "c": c, "derivative": fd.mean, "derivative_stderr": fd.stderr,
              "overlap_term": ov.mean, "overlap_term_stderr": ov.stderr}
    if gaussian:
        margin = SIGMAS * diff.stderr - abs(diff.mean)
        return CheckResult("gaussian_equality", params, diff.mean, diff.stderr, 0.0,
                           margin, margin >= 0)
    return _at_least("infdiv_inequality", params, diff.mean, diff.stderr, 0.0)
