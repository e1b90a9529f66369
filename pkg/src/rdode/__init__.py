"""Discontinuous stationary solutions of reaction-diffusion-ODE systems.

Sub-modules: :mod:`~rdode.domain` (grids, masks, Laplacian),
:mod:`~rdode.kinetics` (reaction terms and branches), :mod:`~rdode.stationary`
(fixed-point construction), :mod:`~rdode.stability` (condition checks and
spectra), :mod:`~rdode.dynamics` (explicit Euler) and :mod:`~rdode.cli`.
"""
__version__ = "0.1.0"

from .domain import Grid, SubdomainMask, build_grid, make_mask, neumann_eigenvalues, pi_glyph_spec  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .kinetics import (  # noqa: E402
    CANONICAL_BETA,
    CANONICAL_DELTA,
    CANONICAL_RHO,
    CANONICAL_SIGMA,
    ConstantState,
    KineticsModel,
    constant_steady_states,
    fitzhugh_model,
    linearization_at,
)
from .stability import det_ratio, spectral_bound, stability_report  # noqa: E402
from .stationary import StationarySolution, fixed_point_construct, multi_branch_construct  # noqa: E402
from .dynamics import cfl_max_dt, fit_decay_rate, perturb, simulate  # noqa: E402


def canonical_model() -> KineticsModel:
    """FitzHugh kinetics with the repository's derived default parameters."""
    return fitzhugh_model(CANONICAL_BETA, CANONICAL_SIGMA, CANONICAL_DELTA, CANONICAL_RHO)
