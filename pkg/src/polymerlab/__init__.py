"""Exact transfer matrices and Monte Carlo checks for 1+1 dimensional directed polymers."""

__version__ = "0.1.0"

from .env import (  # noqa: E402
    CenteredGamma,
    CenteredPoisson,
    CompoundPoissonTwoAtom,
    DomainError,
    EnvField,
    EnvModel,
    Gaussian,
    LevyTriple,
    JumpMeasure,
    ibp_residual,
    lam,
    lam_prime,
    lam_second,
    lemma_c,
    parse_model_spec,
    sample_field,
)
from .mc import Ensemble, McEstimate  # noqa: E402
from .pinning import f_n, log_pinning, pinning_free_energy  # noqa: E402
from .polymer import log_partition, log_w, marginals, overlap_expectation  # noqa: E402
from .replica import InterpolationPoint, dphi_dt, dphi_du, phi  # noqa: E402
