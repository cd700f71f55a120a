import math

import numpy as np
import pytest

from polymerlab.env import CenteredPoisson, DomainError, Gaussian
from polymerlab.experiments import (
    SIGMAS,
    concentration_bound,
    concentration_tails,
    estimate_pn,
    fit_power_law,
    gaussian_equality_check,
    mean_w_check,
    monotonicity_check,
    pn_samples,
    scaling_fit,
    scaling_length,
    superadditivity_check,
    variance_scaling,
    wat_check,
)
from polymerlab.mc import McEstimate, replicate_map

G = Gaussian(1.0)


def test_estimate_pn_beta_zero_exact():
    est = estimate_pn(G, 0.0, 32, 10, 1)
    assert est.mean == 0.0 and est.stderr == 0.0
    with pytest.raises(ValueError):
        estimate_pn(G, 0.5, 8, 1, 1)


def test_jensen_bound():
    for model in (G, CenteredPoisson(1.0)):
        est = estimate_pn(model, 0.5, 16, 200, 3)
        assert est.mean <= SIGMAS * est.stderr


def test_strong_disorder_negative():
    est = estimate_pn(G, 1.0, 64, 500, 5)
    assert est.mean < 0
    assert abs(est.mean) > 3 * est.stderr


def test_stderr_definition():
    x = pn_samples(G, [0.5], 8, 30, 2)[:, 0]
    est = McEstimate.from_samples(x, 2)
    assert est.stderr == pytest.approx(np.std(x, ddof=1) / math.sqrt(30))


def test_wat_beta_zero_and_domain():
    r = wat_check(G, 0.0, 20, 10, 1)
    assert r.estimate == 0.0 and r.bound == 0.0 and r.passed
    with pytest.raises(DomainError):
        wat_check(CenteredPoisson(1.0), 5.0, 10, 10, 1)


def test_wat_small_run():
    r = wat_check(Gaussian(0.25), 0.3, 20, 200, 4)
    assert r.passed
    assert r.bound < 0
    assert r.margin == pytest.approx(r.estimate - r.bound + 3 * r.stderr)


def test_mean_w_and_superadditivity():
    assert mean_w_check(G, 0.3, 16, 400, 6).passed
    checks = superadditivity_check(G, 0.6, [16, 32, 64], 200, 7)
    assert len(checks) == 2
    assert all(c.passed for c in checks)


def test_scaling_helpers():
    assert scaling_length(1.0) == 50
    assert scaling_length(0.6) == math.ceil(50 / 0.6 ** 4)
    assert scaling_length(0.1) == 4096
    b = np.array([0.5, 1.0, 2.0])
    slope, intercept, se = fit_power_law(b, -3.0 * b ** 4, [1e-9] * 3)
    assert slope == pytest.approx(4.0)
    assert math.exp(intercept) == pytest.approx(3.0)
    assert se < 1e-6
    with pytest.raises(ValueError, match="refused"):
        scaling_fit(G, [1.0, 1.0], replicates=4, seed=0)


def test_scaling_excludes_nonnegative_point(monkeypatch):
    import polymerlab.experiments as ex

    def fake(model, beta, n, replicates, seed, workers=1):
        return McEstimate(-beta ** 4 if beta > 0.7 else 1e-3, 1e-4, replicates, seed)

    monkeypatch.setattr(ex, "estimate_pn", fake)
    with pytest.warns(RuntimeWarning, match="excluded"):
        res = scaling_fit(G, [0.6, 0.8, 1.0], replicates=4, seed=0)
    assert res.excluded == [0.6]
    assert res.slope == pytest.approx(4.0)
    with pytest.warns(RuntimeWarning), pytest.raises(ValueError, match="fewer than two"):
        scaling_fit(G, [0.5, 0.6, 1.0], replicates=4, seed=0)


def test_monotonicity():
    rep = monotonicity_check(G, [0.0, 0.5], 16, 50, 1)
    assert rep.estimates[0].mean == 0.0
    assert rep.passed
    rep = monotonicity_check(G, [0.25, 0.5, 0.75, 1.0], 32, 100, 2)
    assert rep.passed
    assert 0 <= rep.realization_monotone <= 1
    assert len(rep.paired_stderr) == 3
    with pytest.raises(ValueError):
        monotonicity_check(G, [0.5, 0.5], 8, 10, 1)


def test_concentration_bound_shape():
    x = np.array([0.0, 0.5, 1.0, 3.0])
    b = concentration_bound(x, 10, 1.0)
    assert b[0] == 1.0
    assert b[1] == pytest.approx(math.exp(-10 * 0.25 / 4))
    assert b[3] == pytest.approx(math.exp(-10 * 2.0))
    assert np.all(np.diff(b) <= 0)


def test_concentration_tails():
    rep = concentration_tails(G, 0.5, 32, 1000, 3)
    assert rep.upper[0] == pytest.approx(0.5, abs=0.1)
    assert rep.lower[0] == pytest.approx(0.5, abs=0.1)
    for f in (rep.upper, rep.lower):
        assert np.all((f >= 0) & (f <= 1))
        assert np.all(np.diff(f) <= 0)
    assert rep.k_hat > 0
    assert rep.dominated
    assert len(list(rep.rows())) == len(rep.x)
    with pytest.warns(RuntimeWarning):
        concentration_tails(G, 0.5, 8, 100, 3)


def test_variance_scaling_small():
    r = variance_scaling(G, 0.5, (16, 32), replicates=500, seed=2)
    assert r.passed
    assert r.margin == pytest.approx(math.log(2.5) - abs(math.log(r.estimate)))


def test_gaussian_equality_small():
    r = gaussian_equality_check(0.4, 16, 300, 13)
    assert r.name == "gaussian_equality"
    assert r.passed
    r = gaussian_equality_check(0.4, 16, 300, 13, model=CenteredPoisson(1.0))
    assert r.name == "infdiv_inequality"
    assert r.passed
    small = gaussian_equality_check(0.02, 16, 50, 1, h=0.01)
    assert abs(small.params["derivative"]) < 0.01
    assert abs(small.params["overlap_term"]) < 0.01


def _square(r, offset):
    return [r * r + offset, -r]


def test_replicate_map_order_independent_of_workers():
    a = replicate_map(_square, 37, 1, offset=0.5)
    b = replicate_map(_square, 37, 3, offset=0.5)
    assert np.array_equal(a, b)
    assert a[5, 0] == 25.5


def test_determinism_across_workers():
    a = pn_samples(CenteredPoisson(1.0), [0.3, 0.6], 20, 24, 9, workers=1)
    b = pn_samples(CenteredPoisson(1.0), [0.3, 0.6], 20, 24, 9, workers=2)
    assert a.tobytes() == b.tobytes()
