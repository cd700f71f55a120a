"""Infinitely divisible environment laws.

Each model carries a closed-form log moment generating function
``lam(beta) = ln E exp(beta * eta)`` together with its Levy-Khinchine triple
``(c0, sigma2, pi)``, using the truncation ``1{|u| <= 1}`` in the compensator::

    lam(beta) = c0*beta + sigma2*beta**2/2
                + int (exp(beta*u) - 1 - beta*u*1{|u|<=1}) pi(du)

A triple written with another compensation convention (e.g. ``1{|u|<=r}`` or
no truncation) has to be converted before use: only the drift changes, by
``c0' = c0 + int u (1{|u|<=r} - 1{|u|<=1}) pi(du)``.

All shipped families are centered (``lam'(0) = 0``).
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

GAUSSIAN_BOUND_CAP = 8.0
JUMP_BOUND_DEFAULT = 8.0
GAMMA_BOUND_FRACTION = 0.9


class DomainError(ValueError):
    """Argument outside the domain where a quantity is finite or defined."""


class QuadratureError(ArithmeticError):
    """Jump-density quadrature did not settle."""


# ---------------------------------------------------------------------------
# Jump measure and triple
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpDensity:
    """Absolutely continuous part of a jump measure.

    ``tail_rate`` is the exponential decay rate of the density at the upper
    end when the true support is unbounded (the quadrature truncates at
    ``upper``).  Exponential moments ``int e^{b u} pi(du)`` over ``u > 1``
    diverge for ``b >= tail_rate``.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    lower: float
    upper: float
    nodes: int = 256
    tail_rate: float | None = None

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("density bounds must satisfy lower < upper")
        if self.nodes < 2:
            raise ValueError("need at least 2 quadrature nodes")

    def panels(self) -> list[tuple[float, float]]:
        # Break at 0 and +-1 (compensator jump), then dyadically beyond |u|=1.
        cuts = {self.lower, self.upper}
        for c in (-1.0, 0.0, 1.0):
            if self.lower < c < self.upper:
                cuts.add(c)
        edge = 2.0
        while edge < max(abs(self.lower), abs(self.upper)):
            for c in (-edge, edge):
                if self.lower < c < self.upper:
                    cuts.add(c)
            edge *= 2.0
        pts = sorted(cuts)
        return list(zip(pts[:-1], pts[1:]))

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        total = 0.0
        for a, b in self.panels():
            u = 0.5 * (b - a) * x + 0.5 * (b + a)
            vals = g(u) * self.fn(u)
            if not np.all(np.isfinite(vals)):
                raise QuadratureError(f"non-finite integrand on [{a}, {b}]")
            total += 0.5 * (b - a) * float(np.dot(w, vals))
        return total


@dataclass(frozen=True)
class JumpMeasure:
    """Levy measure: finitely many atoms plus an optional density."""

    atoms: tuple[tuple[float, float], ...] = ()
    density: JumpDensity | None = None

    def __post_init__(self):
        for loc, mass in self.atoms:
            if loc == 0:
                raise ValueError("jump atoms must sit away from 0")
            if not mass > 0:
                raise ValueError("jump atom masses must be positive")
        if self.density is not None:
            small = self.integrate(lambda u: np.minimum(1.0, u * u))
            if not math.isfinite(small):
                raise ValueError("int min(1, u^2) pi(du) is not finite")

    @property
    def is_null(self) -> bool:
        return not self.atoms and self.density is None

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        """``int g(u) pi(du)``; ``g`` must accept numpy arrays."""
        total = 0.0
        if self.atoms:
            loc = np.array([a for a, _ in self.atoms], dtype=float)
            mass = np.array([m for _, m in self.atoms], dtype=float)
            total += float(np.dot(mass, g(loc)))
        if self.density is not None:
            total += self.density.integrate(g)
        return total

    def positive_tail_rate(self) -> float:
        """Supremum of ``b`` with ``int_{u>1} e^{b u} pi(du)`` finite."""
        if self.density is not None and self.density.tail_rate is not None:
            return self.density.tail_rate
        return math.inf

    def scaled(self, factor: float) -> "JumpMeasure":
        """Image measure under ``u -> factor * u``."""
        atoms = tuple((factor * a, m) for a, m in self.atoms)
        dens = None
        if self.density is not None:
            d = self.density
            fn = d.fn
            dens = JumpDensity(
                fn=lambda v, fn=fn, f=factor: fn(v / f) / f,
                lower=factor * d.lower,
                upper=factor * d.upper,
                nodes=d.nodes,
                tail_rate=None if d.tail_rate is None else d.tail_rate / factor,
            )
        return JumpMeasure(atoms=atoms, density=dens)


def _inside(u):
    return (np.abs(u) <= 1.0).astype(float)


@dataclass(frozen=True)
class LevyTriple:
    c0: float
    sigma2: float
    jumps: JumpMeasure = field(default_factory=JumpMeasure)

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")

    def lam(self, beta: float) -> float:
        jump = self.jumps.integrate(
            lambda u: np.expm1(beta * u) - beta * u * _inside(u))
        return self.c0 * beta + 0.5 * self.sigma2 * beta * beta + jump

    def lam_prime(self, beta: float) -> float:
        jump = self.jumps.integrate(
            lambda u: u * (np.exp(beta * u) - _inside(u)))
        return self.c0 + self.sigma2 * beta + jump

    def lam_second(self, beta: float) -> float:
        return self.sigma2 + self.jumps.integrate(lambda u: u * u * np.exp(beta * u))


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

class EnvModel(ABC):
    """Centered infinitely divisible law of a single site value."""

    family: str = ""

    @property
    @abstractmethod
    def mgf_bound(self) -> float:
        """Largest |beta| accepted by the cumulant functions."""

    @abstractmethod
    def _lam(self, beta: float) -> float: ...

    @abstractmethod
    def _lam_prime(self, beta: float) -> float: ...

    @abstractmethod
    def _lam_second(self, beta: float) -> float: ...

    @abstractmethod
    def triple(self) -> LevyTriple: ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray: ...

    @abstractmethod
    def params(self) -> dict: ...

    @property
    def variance(self) -> float:
        return self._lam_second(0.0)

    def spec(self) -> dict:
        return {"family": self.family, **self.params()}

    def scaled(self, factor: float) -> "EnvModel":
        """Law of ``factor * eta``."""
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        return ScaledModel(self, float(factor))

    def __str__(self):
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{self.family}({inner})"


@dataclass(frozen=True)
class Gaussian(EnvModel):
    var: float = 1.0
    bound: float = GAUSSIAN_BOUND_CAP

    family = "gaussian"

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError("gaussian variance must be positive")

    @property
    def mgf_bound(self):
        return self.bound

    def _lam(self, beta):
        return 0.5 * self.var * beta * beta

    def _lam_prime(self, beta):
        return self.var * beta

    def _lam_second(self, beta):
        return self.var

    def triple(self):
        return LevyTriple(0.0, self.var)

    def sample(self, rng, size):
        return math.sqrt(self.var) * rng.standard_normal(size)

    def params(self):
        return {"variance": self.var}


@dataclass(frozen=True)
class CenteredPoisson(EnvModel):
    """``X - rate`` with ``X ~ Poisson(rate)``."""

    rate: float = 1.0
    bound: float = JUMP_BOUND_DEFAULT

    family = "centered_poisson"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("poisson rate must be positive")

    @property
    def mgf_bound(self):
        return self.bound

    def _lam(self, beta):
        return self.rate * (math.expm1(beta) - beta)

    def _lam_prime(self, beta):
        return self.rate * math.expm1(beta)

    def _lam_second(self, beta):
        return self.rate * math.exp(beta)

    def triple(self):
        # single atom at u=1 sits inside the truncation window: no drift
        return LevyTriple(0.0, 0.0, JumpMeasure(atoms=((1.0, self.rate),)))

    def sample(self, rng, size):
        return rng.poisson(self.rate, size).astype(float) - self.rate

    def params(self):
        return {"rate": self.rate}


@dataclass(frozen=True)
class CenteredGamma(EnvModel):
    """``G - shape*scale`` with ``G ~ Gamma(shape, scale)``."""

    shape: float = 1.0
    scale: float = 1.0
    bound: float | None = None
    nodes: int = 256

    family = "centered_gamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("gamma shape and scale must be positive")
        if self.bound is not None and not 0 < self.bound < 1.0 / self.scale:
            raise ValueError("gamma mgf bound must lie in (0, 1/scale)")

    @property
    def mgf_bound(self):
        if self.bound is not None:
            return self.bound
        return GAMMA_BOUND_FRACTION / self.scale

    def _lam(self, beta):
        k, th = self.shape, self.scale
        return -k * math.log1p(-th * beta) - k * th * beta

    def _lam_prime(self, beta):
        k, th = self.shape, self.scale
        return k * th * th * beta / (1.0 - th * beta)

    def _lam_second(self, beta):
        k, th = self.shape, self.scale
        return k * th * th / (1.0 - th * beta) ** 2

    def triple(self):
        k, th = self.shape, self.scale
        # pi(du) = k e^{-u/th} / u du on u > 0; truncated where the tail is
        # below e^{-40} even at beta = 0.9/th.
        dens = JumpDensity(
            fn=lambda u: k * np.exp(-u / th) / u,
            lower=0.0,
            upper=400.0 * th,
            nodes=self.nodes,
            tail_rate=1.0 / th,
        )
        return LevyTriple(-k * th * math.exp(-1.0 / th), 0.0, JumpMeasure(density=dens))

    def sample(self, rng, size):
        return rng.gamma(self.shape, self.scale, size) - self.shape * self.scale

    def params(self):
        return {"shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class CompoundPoissonTwoAtom(EnvModel):
    """Centered compound Poisson with jumps ``a_plus`` (prob ``p_plus``) and ``a_minus``."""

    rate: float = 1.0
    a_plus: float = 1.0
    a_minus: float = -1.0
    p_plus: float = 0.5
    bound: float = JUMP_BOUND_DEFAULT

    family = "compound_two_atom"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if not (self.a_plus > 0 and self.a_minus < 0):
            raise ValueError("need a_plus > 0 > a_minus")
        if not 0 <= self.p_plus <= 1:
            raise ValueError("p_plus must lie in [0, 1]")

    @property
    def mgf_bound(self):
        return self.bound

    def _masses(self):
        return self.rate * self.p_plus, self.rate * (1.0 - self.p_plus)

    def _mean_jump(self):
        return self.p_plus * self.a_plus + (1.0 - self.p_plus) * self.a_minus

    def _lam(self, beta):
        mp, mm = self._masses()
        return (mp * math.expm1(beta * self.a_plus) + mm * math.expm1(beta * self.a_minus)
                - beta * self.rate * self._mean_jump())

    def _lam_prime(self, beta):
        mp, mm = self._masses()
        return (mp * self.a_plus * math.exp(beta * self.a_plus)
                + mm * self.a_minus * math.exp(beta * self.a_minus)
                - self.rate * self._mean_jump())

    def _lam_second(self, beta):
        mp, mm = self._masses()
        return (mp * self.a_plus ** 2 * math.exp(beta * self.a_plus)
                + mm * self.a_minus ** 2 * math.exp(beta * self.a_minus))

    def triple(self):
        mp, mm = self._masses()
        atoms = tuple((a, m) for a, m in ((self.a_plus, mp), (self.a_minus, mm)) if m > 0)
        inside = sum(m * a for a, m in atoms if abs(a) <= 1.0)
        return LevyTriple(inside - self.rate * self._mean_jump(), 0.0, JumpMeasure(atoms=atoms))

    def sample(self, rng, size):
        # interleaved (plus, minus) counts per site keep the draw order site by site
        counts = rng.poisson(self._masses(), (size, 2)).astype(float)
        return counts @ np.array([self.a_plus, self.a_minus]) - self.rate * self._mean_jump()

    def params(self):
        return {"rate": self.rate, "a_plus": self.a_plus,
                "a_minus": self.a_minus, "p_plus": self.p_plus}


@dataclass(frozen=True)
class ScaledModel(EnvModel):
    """Law of ``factor * eta`` for a base model."""

    base: EnvModel
    factor: float

    @property
    def family(self):
        return self.base.family

    @property
    def mgf_bound(self):
        return self.base.mgf_bound / self.factor

    def _lam(self, beta):
        return self.base._lam(self.factor * beta)

    def _lam_prime(self, beta):
        return self.factor * self.base._lam_prime(self.factor * beta)

    def _lam_second(self, beta):
        return self.factor ** 2 * self.base._lam_second(self.factor * beta)

    def triple(self):
        t = self.base.triple()
        jumps = t.jumps.scaled(self.factor)
        # centered law: lam'(0) = 0 fixes the drift as -int_{|u|>1} u pi(du)
        c0 = -jumps.integrate(lambda u: u * (1.0 - _inside(u)))
        return LevyTriple(c0, self.factor ** 2 * t.sigma2, jumps)

    def sample(self, rng, size):
        return self.factor * self.base.sample(rng, size)

    def params(self):
        return {**self.base.params(), "factor": self.factor}

    def scaled(self, factor):
        return self.base.scaled(self.factor * factor)


# ---------------------------------------------------------------------------
# Cumulant functions with domain checks
# ---------------------------------------------------------------------------

def _check_beta(model: EnvModel, beta: float) -> None:
    if not abs(beta) <= model.mgf_bound:
        raise DomainError(
            f"beta={beta} outside the mgf domain |beta| <= B={model.mgf_bound} of {model}")


def lam(model: EnvModel, beta: float) -> float:
    """``ln E exp(beta * eta)``."""
    _check_beta(model, beta)
    return model._lam(beta)


def lam_prime(model: EnvModel, beta: float) -> float:
    _check_beta(model, beta)
    return model._lam_prime(beta)


def lam_second(model: EnvModel, beta: float) -> float:
    _check_beta(model, beta)
    return model._lam_second(beta)


def ibp_residual(model: EnvModel, s: float) -> float:
    """Residual of the integration-by-parts identity for ``f(eta) = e^{s eta}``.

    The left side ``E[eta f(eta)]`` is ``lam'(s) e^{lam(s)}`` in closed form.
    The right side ``c0 E f + sigma2 E f' + int (E f(eta+u) - 1{|u|<=1} E f) u pi(du)``
    is assembled from the triple, with ``E f = e^{lam(s)}`` and
    ``E f(eta + u) = e^{s u} E f``.
    """
    if not 0 <= s <= model.mgf_bound / 2:
        raise DomainError(f"s={s} outside [0, B/2] with B={model.mgf_bound}")
    trip = model.triple()
    ef = math.exp(model._lam(s))
    lhs = model._lam_prime(s) * ef
    jump = trip.jumps.integrate(lambda u: (np.exp(s * u) - _inside(u)) * u)
    rhs = trip.c0 * ef + trip.sigma2 * s * ef + jump * ef
    return abs(lhs - rhs)


def lemma_c(model: EnvModel, big_b: float) -> float:
    """``sigma2 + int_{u<0} u^2 pi(du) + int_{u>0} u^2 e^{B u} pi(du)``."""
    if big_b < 0:
        raise DomainError("B must be nonnegative")
    trip = model.triple()
    if big_b >= trip.jumps.positive_tail_rate():
        raise DomainError(
            f"int_(u>0) u^2 e^(B u) pi(du) diverges for B={big_b} "
            f">= {trip.jumps.positive_tail_rate()}")
    if big_b > model.mgf_bound:
        raise DomainError(f"B={big_b} exceeds the mgf bound {model.mgf_bound} of {model}")
    jump = trip.jumps.integrate(lambda u: u * u * np.where(u > 0, np.exp(big_b * np.maximum(u, 0.0)), 1.0))
    return trip.sigma2 + jump


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

_FAMILY_ALIASES = {
    "gaussian": "gaussian", "normal": "gaussian",
    "centered_poisson": "centered_poisson", "poisson": "centered_poisson",
    "centered_gamma": "centered_gamma", "gamma": "centered_gamma",
    "compound_two_atom": "compound_two_atom", "two_atom": "compound_two_atom",
    "compound_poisson_two_atom": "compound_two_atom",
}

_FAMILY_KEYS = {
    "gaussian": {"variance": "var", "var": "var", "mgf_bound": "bound"},
    "centered_poisson": {"rate": "rate", "mgf_bound": "bound"},
    "centered_gamma": {"shape": "shape", "scale": "scale", "mgf_bound": "bound",
                       "nodes": "nodes"},
    "compound_two_atom": {"rate": "rate", "a_plus": "a_plus", "a_minus": "a_minus",
                          "p_plus": "p_plus", "mgf_bound": "bound"},
}

_CLASSES = {
    "gaussian": Gaussian,
    "centered_poisson": CenteredPoisson,
    "centered_gamma": CenteredGamma,
    "compound_two_atom": CompoundPoissonTwoAtom,
}


def model_from_mapping(section: Mapping[str, object]) -> EnvModel:
    """Build a model from ``family=<name>`` plus named parameters.

    Recognised families and keys::

        gaussian            variance (alias var), mgf_bound
        centered_poisson    rate, mgf_bound
        centered_gamma      shape, scale, mgf_bound, nodes
        compound_two_atom   rate, a_plus, a_minus, p_plus, mgf_bound

    An optional ``factor`` multiplies the site values.
    """
    items = {str(k).strip().lower().replace("-", "_"): v for k, v in section.items()}
    if "family" not in items:
        raise ValueError("model spec needs a 'family' key")
    fam = _FAMILY_ALIASES.get(str(items.pop("family")).strip().lower())
    if fam is None:
        raise ValueError(f"unknown family; choose one of {sorted(_CLASSES)}")
    factor = float(items.pop("factor", 1.0))
    keymap = _FAMILY_KEYS[fam]
    kwargs = {}
    for k, v in items.items():
        if k not in keymap:
            raise ValueError(f"unknown parameter {k!r} for family {fam}")
        kwargs[keymap[k]] = int(v) if k == "nodes" else float(v)
    model = _CLASSES[fam](**kwargs)
    return model if factor == 1.0 else model.scaled(factor)


def parse_model_spec(text: str) -> EnvModel:
    """Parse ``"family=centered_poisson, rate=1.0"``."""
    section = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"malformed model spec entry {part!r}; expected key=value")
        k, v = part.split("=", 1)
        section[k.strip()] = v.strip()
    return model_from_mapping(section)


def shipped_models() -> Iterable[EnvModel]:
    """One representative per family, used by self-checks."""
    return (
        Gaussian(1.0),
        CenteredPoisson(1.0),
        CenteredGamma(2.0, 0.2),
        CompoundPoissonTwoAtom(1.0, 1.0, -1.0, 0.5),
    )


# ---------------------------------------------------------------------------
# Environment realizations
# ---------------------------------------------------------------------------

def site_count(n: int) -> int:
    """Number of sites (i, x) with 1 <= i <= n, |x| <= i, x = i mod 2."""
    return n * (n + 3) // 2


@dataclass(frozen=True, eq=False)
class EnvField:
    """One realization of eta(i, x) on the sites reachable in ``n`` steps.

    ``values[i-1, k]`` holds eta(i, 2k - i) for ``0 <= k <= i``; the rest of
    each row is zero padding.
    """

    values: np.ndarray
    seed: int | None = None
    replicate: int | None = None
    model: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        n = v.shape[0]
        if v.ndim != 2 or v.shape[1] != n + 1 or n < 1:
            raise ValueError("field values must have shape (n, n+1) with n >= 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_rows(cls, rows, **kw) -> "EnvField":
        """Build from rows ``[eta(i,-i), eta(i,-i+2), ..., eta(i,i)]`` for i = 1..n."""
        n = len(rows)
        v = np.zeros((n, n + 1))
        for i, row in enumerate(rows, start=1):
            if len(row) != i + 1:
                raise ValueError(f"row {i} needs {i + 1} values, got {len(row)}")
            v[i - 1, : i + 1] = row
        return cls(v, **kw)

    def row(self, i: int) -> np.ndarray:
        return self.values[i - 1, : i + 1]

    def __getitem__(self, site: tuple[int, int]) -> float:
        i, x = site
        if not (1 <= i <= self.n and abs(x) <= i and (x + i) % 2 == 0):
            raise KeyError(site)
        return float(self.values[i - 1, (x + i) // 2])

    def sites(self):
        for i in range(1, self.n + 1):
            for k in range(i + 1):
                yield i, 2 * k - i

    def with_value(self, i: int, x: int, value: float) -> "EnvField":
        self[i, x]
        v = self.values.copy()
        v[i - 1, (x + i) // 2] = value
        return EnvField(v, self.seed, self.replicate, self.model)

    def map(self, fn) -> "EnvField":
        """Apply ``fn`` to every populated site, keeping the padding at zero."""
        v = self.values.copy()
        mask = np.tri(self.n, self.n + 1, 1, dtype=bool)
        v[mask] = fn(v[mask])
        return EnvField(v, self.seed, self.replicate, self.model)


def field_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    """Philox stream keyed by (seed, replicate); independent of any other stream."""
    if seed < 0 or replicate < 0:
        raise ValueError("seed and replicate must be nonnegative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replicate])))


def sample_field(model: EnvModel, n: int, seed: int, replicate: int = 0) -> EnvField:
    """Draw eta on all sites of an ``n``-step walk.

    Site values are drawn in the fixed order i = 1, 2, ... and x increasing,
    from a stream keyed by ``(seed, replicate)``.  The value at a site thus
    depends only on (seed, replicate, i, x): fields of different lengths agree
    on their common sites.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    draws = model.sample(field_rng(seed, replicate), site_count(n))
    v = np.zeros((n, n + 1))
    v[np.tri(n, n + 1, 1, dtype=bool)] = draws
    return EnvField(v, seed, replicate, str(model))
