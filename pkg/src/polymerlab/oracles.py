"""Randomized equivalence between the recursions and exhaustive enumeration."""
from __future__ import annotations

import time

import numpy as np

from .env import sample_field, shipped_models
from .pinning import brute_force_pinning, log_pinning
from .polymer import brute_force_log_partition, log_partition
from .replica import InterpolationPoint, brute_force_phi, phi

TOLERANCE = 1e-10


def _suite(name, cases, tol):
    start = time.perf_counter()
    worst = 0.0
    for dp, bf in cases:
        worst = max(worst, abs(dp() - bf()))
    return {"suite": name, "instances": len(cases), "max_abs_error": worst,
            "tolerance": tol, "passed": worst <= tol,
            "seconds": round(time.perf_counter() - start, 3)}


def oracle_suites(seed: int = 0, instances: int = 200, max_n_partition: int = 10,
                  max_n_phi: int = 6, max_n_pinning: int = 8, tol: float = TOLERANCE) -> list[dict]:
    """Run the three suites on random instances drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    models = list(shipped_models())

    part = []
    for r in range(instances):
        model = models[r % len(models)]
        fld = sample_field(model, int(rng.integers(1, max_n_partition + 1)), seed, r)
        beta = float(rng.uniform(0.0, 2.0))
        part.append((lambda f=fld, b=beta: log_partition(f, b),
                     lambda f=fld, b=beta: brute_force_log_partition(f, b)))

    reps = []
    for r in range(instances):
        model = models[r % len(models)]
        fld = sample_field(model, int(rng.integers(1, max_n_phi + 1)), seed + 1, r)
        beta = float(rng.uniform(0.0, min(1.0, model.mgf_bound / 2)))
        pt = InterpolationPoint(float(rng.uniform()), float(rng.uniform(0.0, 3.0)), beta)
        reps.append((lambda f=fld, p=pt, m=model: phi(f, p, m),
                     lambda f=fld, p=pt, m=model: brute_force_phi(f, p, m)))

    pins = []
    for _ in range(instances):
        n = int(rng.integers(1, max_n_pinning + 1))
        t = float(rng.uniform(0.0, 2.0))
        pins.append((lambda n=n, t=t: log_pinning(n, t),
                     lambda n=n, t=t: brute_force_pinning(n, t)))

    return [_suite("log_partition", part, tol), _suite("phi", reps, tol),
            _suite("log_pinning", pins, tol)]
