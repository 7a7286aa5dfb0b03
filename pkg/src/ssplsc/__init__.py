"""Structured and sparse partial least squares coherence.

Detects frequency-domain coupling between two multichannel signal sets by
learning sparse, connectivity-smoothed real projections whose latent
variables are maximally coherent.
"""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402
from .baselines import solve_cacoh, solve_plsc, solve_splsc  # noqa: E402
from .evaluation import (  # noqa: E402
    Band,
    Method,
    align_and_average_patterns,
    coherence_spectrum,
    cross_validate_params,
    latent_coherence,
    permutation_csr,
)
from .optim import ProjectionSolution, RegParams, SolverConfig, solve_ssplsc  # noqa: E402
from .simgen import SimConfig, generate  # noqa: E402
from .spectra import (  # noqa: E402
    Recording,
    SpectralSample,
    cross_spectrum,
    fourier_coefficients,
    laplacian,
    sensor_connectivity,
)

__all__ = [
    "BACKEND",
    "Band",
    "Method",
    "ProjectionSolution",
    "Recording",
    "RegParams",
    "SimConfig",
    "SolverConfig",
    "SpectralSample",
    "align_and_average_patterns",
    "coherence_spectrum",
    "cross_spectrum",
    "cross_validate_params",
    "fourier_coefficients",
    "generate",
    "laplacian",
    "latent_coherence",
    "permutation_csr",
    "sensor_connectivity",
    "solve_cacoh",
    "solve_plsc",
    "solve_splsc",
    "solve_ssplsc",
]
