"""Replicate-level Monte Carlo plumbing.

Replicate ``r`` always draws its environment from the stream keyed by
``(seed, r)`` and results are stored at row ``r``, so the output array does
not depend on how replicates are split across worker processes.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np


@dataclass(frozen=True)
class Ensemble:
    """Environment ensemble: path length, replicate count, master seed."""

    n: int
    replicates: int
    seed: int
    workers: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.replicates < 2:
            raise ValueError("need at least 2 replicates")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    replicates: int
    seed: int

    @classmethod
    def from_samples(cls, samples, seed: int) -> "McEstimate":
        x = np.asarray(samples, dtype=float)
        if x.size < 2:
            raise ValueError("need at least 2 samples")
        return cls(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size), seed)

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr,
                "replicates": self.replicates, "seed": self.seed}


def default_workers() -> int:
    return os.cpu_count() or 1


def _run_chunk(fn, rs, kwargs):
    return [np.atleast_1d(np.asarray(fn(r, **kwargs), dtype=float)) for r in rs]


def replicate_map(fn, replicates: int, workers: int = 1, **kwargs) -> np.ndarray:
    """Evaluate ``fn(r, **kwargs)`` for r = 0..replicates-1; row r holds replicate r.

    ``fn`` must be a module-level function when ``workers > 1``.
    """
    workers = max(1, min(int(workers or 1), replicates))
    if workers == 1:
        rows = _run_chunk(fn, range(replicates), kwargs)
    else:
        chunks = np.array_split(np.arange(replicates), workers * 4)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(partial(_run_chunk, fn, kwargs=kwargs),
                             [c.tolist() for c in chunks if c.size])
            rows = [row for part in parts for row in part]
    return np.vstack(rows)
