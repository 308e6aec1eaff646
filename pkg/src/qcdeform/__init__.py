"""Extremal coefficient problems for nonvanishing Hardy and Bergman functions, and
quasiconformal deformations that move one coefficient while holding an integral mean."""

from .config import SPEC_VERSION
from .deform import (DeformationProblem, DeformationResult, a2_linkage, newton_deform, normalized_full_solve,
                     replay, variational_predict, verify_deformation)
from .errors import (AnnulusError, BudgetError, ContractViolation, DegenerateInputError, DomainError,
                     FamilyMembershipError, NonConvergenceError, PoleError, PreconditionError,
                     ProblemStructureError, QCDeformError, SolverInconsistencyError)
from .extremals import bergman_perturb, hsz_bound, series_kappa, verify_bound
from .integral_ops import (AnnulusSpec, LaurentDensity, beurling_Pi, build_map, cauchy_T, neumann_solve, pairing,
                           phi_functional)
from .norms import bergman_norm, bloch_norm, hardy_norm
from .schwarzian import a_from_b, covering_check, invert_map, normalize_rotation, schwarzian_of, solve_schwarzian
from .series import PowerSeries

__version__ = "0.1.0"

__all__ = [
    "SPEC_VERSION", "PowerSeries",
    "hardy_norm", "bergman_norm", "bloch_norm",
    "series_kappa", "hsz_bound", "verify_bound", "bergman_perturb",
    "AnnulusSpec", "LaurentDensity", "cauchy_T", "beurling_Pi", "pairing", "neumann_solve", "build_map",
    "phi_functional",
    "DeformationProblem", "DeformationResult", "newton_deform", "replay", "verify_deformation",
    "variational_predict", "normalized_full_solve", "a2_linkage",
    "schwarzian_of", "solve_schwarzian", "invert_map", "a_from_b", "normalize_rotation", "covering_check",
    "QCDeformError", "DomainError", "PreconditionError", "DegenerateInputError", "AnnulusError", "BudgetError",
    "PoleError", "ContractViolation", "NonConvergenceError", "ProblemStructureError", "SolverInconsistencyError",
    "FamilyMembershipError",
]
