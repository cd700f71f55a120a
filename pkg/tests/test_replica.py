import math
from math import comb

import numpy as np
import pytest

from polymerlab.env import CenteredPoisson, DomainError, EnvField, Gaussian, sample_field, shipped_models
from polymerlab.mc import Ensemble
from polymerlab.pinning import f_n, log_pinning
from polymerlab.polymer import log_w, overlap_expectation
from polymerlab.replica import (
    InterpolationPoint,
    brute_force_observables,
    brute_force_phi,
    dphi_dt,
    dphi_du,
    fkg_gap,
    gap,
    gibbs_observables,
    path_check,
    phi,
)

G = Gaussian(1.0)
QUARTER = Gaussian(0.25)


def return_sum(n):
    return sum(comb(2 * i, i) / 4 ** i for i in range(1, n + 1))


def test_phi_examples():
    f = sample_field(G, 5, 1)
    assert phi(f, InterpolationPoint(0, 0, 0.7), G) == 0.0
    assert phi(f, InterpolationPoint(0, 1.5, 0.7), G) == pytest.approx(
        log_pinning(5, 1.5 * 0.49) / 10, abs=1e-12)
    assert phi(f, InterpolationPoint(1, 0, 0.7), G) == pytest.approx(log_w(f, 0.7, G) / 5, abs=1e-12)


@pytest.mark.parametrize("model", shipped_models(), ids=str)
def test_phi_matches_brute_force(model):
    rng = np.random.default_rng(5)
    for r in range(25):
        n = int(rng.integers(1, 7))
        f = sample_field(model, n, 31, r)
        beta = float(rng.uniform(0.05, 0.9))
        t = float(rng.uniform(0, 1))
        u = float(rng.uniform(0, 3))
        pt = InterpolationPoint(t, u, beta)
        assert abs(phi(f, pt, model) - brute_force_phi(f, pt, model)) <= 1e-10


def test_observables_match_brute_force():
    rng = np.random.default_rng(6)
    for r in range(20):
        n = int(rng.integers(1, 7))
        f = sample_field(G, n, 4, r)
        pt = InterpolationPoint(float(rng.uniform(0, 1)), float(rng.uniform(0, 2)), 0.6)
        h, l = gibbs_observables(f, pt, G)
        bh, bl = brute_force_observables(f, pt)
        assert h == pytest.approx(bh, abs=1e-10)
        assert l == pytest.approx(bl, abs=1e-10)
        assert 0 < l <= n


def test_observables_at_origin():
    f1 = EnvField.from_rows([[0.3, -0.2]])
    assert gibbs_observables(f1, InterpolationPoint(0, 0, 0.5), G)[1] == pytest.approx(0.5)
    f2 = sample_field(G, 2, 0)
    assert gibbs_observables(f2, InterpolationPoint(0, 0, 0.5), G)[1] == pytest.approx(0.875)


def test_overlap_tends_to_n_for_large_u():
    f = sample_field(G, 10, 2)
    _, l = gibbs_observables(f, InterpolationPoint(0.5, 200.0, 0.5), G)
    assert l == pytest.approx(10, abs=1e-6)


def test_dphi_du_environment_free_at_origin():
    for seed in (1, 2):
        f = sample_field(G, 12, seed)
        assert dphi_du(f, InterpolationPoint(0, 0, 0.4), G) == pytest.approx(
            0.16 / 24 * return_sum(12), rel=1e-12)


def test_dphi_du_matches_overlap_at_u_zero():
    f = sample_field(CenteredPoisson(1.0), 15, 3)
    for t in (0.0, 0.3, 1.0):
        beta = 0.8
        val = dphi_du(f, InterpolationPoint(t, 0, beta), CenteredPoisson(1.0))
        ref = beta ** 2 / 30 * overlap_expectation(f, math.sqrt(t) * beta)
        assert abs(val - ref) <= 1e-10


@pytest.mark.parametrize("model", shipped_models(), ids=str)
def test_exact_derivatives_match_finite_differences(model):
    f = sample_field(model, 12, 8)
    beta = min(0.8, model.mgf_bound / 2)
    for t, u in ((0.3, 0.0), (0.7, 1.0), (1.0, 2.0)):
        hu = 1e-4
        fd_u = (phi(f, InterpolationPoint(t, u + hu, beta), model)
                - phi(f, InterpolationPoint(t, max(u - hu, 0), beta), model)) / (hu + min(u, hu))
        if u > 0:
            assert fd_u == pytest.approx(dphi_du(f, InterpolationPoint(t, u, beta), model), rel=1e-5)
        ht = 1e-5
        lo, hi = t - ht, min(t + ht, 1.0)
        fd_t = (phi(f, InterpolationPoint(hi, u, beta), model)
                - phi(f, InterpolationPoint(lo, u, beta), model)) / (hi - lo)
        exact = dphi_dt(f, InterpolationPoint(t, u, beta), model)
        tol = 1e-5 if hi - lo == 2 * ht else 1e-3
        assert fd_t == pytest.approx(exact, rel=tol, abs=1e-9)


def test_convex_nondecreasing_in_u():
    f = sample_field(G, 20, 9)
    us = np.linspace(0, 4, 21)
    for t in (0.0, 0.5, 1.0):
        vals = np.array([phi(f, InterpolationPoint(t, u, 0.6), G) for u in us])
        assert np.all(np.diff(vals) >= -1e-12)
        assert np.all(np.diff(vals, 2) >= -1e-10)
        assert phi(f, InterpolationPoint(1, 1, 0.6), G) >= phi(f, InterpolationPoint(1, 0, 0.6), G)


def test_u_zero_consistency_with_log_w():
    f = sample_field(G, 18, 10)
    for t in (0.2, 0.9):
        pt = InterpolationPoint(t, 0, 0.7)
        assert abs(2 * 18 * phi(f, pt, G) - 2 * log_w(f, pt.s, G)) <= 1e-10


def test_domain_errors():
    f = sample_field(G, 4, 0)
    with pytest.raises(DomainError):
        dphi_dt(f, InterpolationPoint(0.01, 0, 0.5), G)
    with pytest.raises(DomainError):
        gap(f, InterpolationPoint(0.0, 0, 0.5), G)
    with pytest.raises(DomainError):
        phi(f, InterpolationPoint(1, 0, 5.0), CenteredPoisson(1.0))
    with pytest.raises(ValueError):
        InterpolationPoint(1.5, 0, 0.5)
    with pytest.raises(ValueError):
        InterpolationPoint(0.5, -1, 0.5)


def test_gap_small_beta_limit():
    # E dphi_du ~ (beta^2/2n) R and E dphi_dt ~ -var (beta^2/2n) R, R = sum_i P(D_i = 0)
    n, beta = 16, 0.01
    lead = beta ** 2 / (2 * n) * return_sum(n) * (1 + QUARTER.variance)
    for t in (0.1, 1.0):
        pt = InterpolationPoint(t, 0, beta)
        g = []
        for r in range(400):
            f = sample_field(QUARTER, n, 12, r)
            # the O(beta) part of dphi_dt is odd in eta; the antithetic pair cancels it
            g.append(0.5 * (gap(f, pt, QUARTER) + gap(f.map(lambda v: -v), pt, QUARTER)))
        mean, se = np.mean(g), np.std(g, ddof=1) / math.sqrt(len(g))
        assert abs(mean - lead) <= 3 * se
        assert mean > 0


def test_gap_is_du_minus_dt():
    f = sample_field(QUARTER, 10, 3)
    pt = InterpolationPoint(1, 0, 0.3)
    assert gap(f, pt, QUARTER) == pytest.approx(dphi_du(f, pt, QUARTER) - dphi_dt(f, pt, QUARTER),
                                                abs=1e-14)


def test_fkg_small_run():
    ens = Ensemble(8, 50, seed=3)
    pts = [InterpolationPoint(t, u, 0.3) for t in (0.1, 1.0) for u in (0, 2)]
    ests = fkg_gap(ens, pts, QUARTER)
    assert len(ests) == 4
    for e in ests:
        assert e.mean >= -3 * e.stderr
        assert e.replicates == 50
    with pytest.warns(RuntimeWarning, match="variance"):
        fkg_gap(Ensemble(4, 2, seed=0), pts[:1], G)


def test_path_check():
    ens = Ensemble(8, 40, seed=4)
    zero = path_check(ens, 0.0, 0.3, QUARTER)
    assert zero.mean == 0.0 and zero.stderr == 0.0
    est = path_check(ens, 1.0, 0.3, QUARTER)
    assert est.mean <= 3 * est.stderr
    assert f_n(0.3, 8) > 0
