"""Large-deviation rate functions of diffusion processes.

Sparse generators on tensor meshes, principal eigenvalues of Feynman-Kac
tilts, Legendre transforms, the Donsker-Varadhan functional and the
symmetric/antisymmetric split of the rate function.
"""

__version__ = "0.1.0"

from . import errors
from ._kernels import BACKEND
from .decompose import (
    DecompositionContext,
    Perturbation,
    antisymmetric_part,
    autocorrelation_ia,
    decompose,
    friction_sweep,
    solve_poisson,
    symmetric_part,
)
from .grid import Mesh, assemble_generator, split_generator, witten_similarity
from .lyapunov import (
    LyapunovSpec,
    check_kappa_admissible,
    check_nonlinear_condition,
    cramer_comparison,
    langevin_lyapunov_params,
    witten_potential,
)
from .model import (
    DiffusionModel,
    ScalarField,
    builtin_model,
    langevin,
    nonreversible_rotational,
    ornstein_uhlenbeck,
    overdamped,
)
from .ratefn import donsker_varadhan_value, double_conjugate_check, legendre_transform, variational_scgf_bound
from .scgf import ScgfCurve, scgf_cloning, scgf_monte_carlo, scgf_spectral, simulate
from .spectral import doob_transform, invariant_measure, principal_eigenpair

__all__ = [
    "BACKEND", "errors",
    "DiffusionModel", "ScalarField", "builtin_model", "langevin", "nonreversible_rotational",
    "ornstein_uhlenbeck", "overdamped",
    "LyapunovSpec", "witten_potential", "check_nonlinear_condition", "check_kappa_admissible",
    "cramer_comparison", "langevin_lyapunov_params",
    "Mesh", "assemble_generator", "split_generator", "witten_similarity",
    "principal_eigenpair", "doob_transform", "invariant_measure",
    "ScgfCurve", "scgf_spectral", "scgf_monte_carlo", "scgf_cloning", "simulate",
    "legendre_transform", "double_conjugate_check", "donsker_varadhan_value", "variational_scgf_bound",
    "DecompositionContext", "Perturbation", "symmetric_part", "solve_poisson", "antisymmetric_part",
    "decompose", "friction_sweep", "autocorrelation_ia",
]
