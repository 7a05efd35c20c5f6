"""Confined Lennard-Jones chain with a single point defect.

Discrete, continuum (zeroth-order) and infinite-cell (first-order)
energies for a periodic 1D chain of 2N atoms whose atom 0 is an impurity,
plus solvers and scaling experiments for the expansion
F_eps ~ F0 + eps * F1.
"""

from .potentials import (
    PotentialSet,
    StrainGrid,
    ValidationReport,
    default_model,
    model_from_json,
    poly_log_sqrt_model,
    shifted_potentials,
    validate_assumptions,
)
from .discrete import (
    ChainConfig,
    Deformation,
    ForceField,
    F1_eps,
    F_eps,
    energy_defect,
    energy_force,
    energy_pure,
    energy_total,
    gradient,
    hessian,
    s_terms,
    sigma_field,
)
from .continuum import ContinuumSolution, F0_functional, F0_sampled, solve_continuum, w_prime_inverse
from .cell import (
    CellSolution,
    DecayReport,
    build_recovery,
    cell_energy,
    decay_check,
    linear_rate,
    minimize_cell,
)
from .solver import SolveOptions, SolveResult, kkt_residual, minimize_discrete

__version__ = "0.1.0"
