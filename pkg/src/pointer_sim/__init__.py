"""Exact and phase-approximated dynamics of a two-level system in a spin environment."""

__version__ = "0.1.0"

from .branch import (Branch, BranchEnsemble, PhaseRecord, assemble_diagonal_approx,
                     branch_state, capital_lambda, lambda_nu, make_ensemble, offdiag_element,
                     phase_equation_residual)
from .errors import ConfigError, PointerSimError, ResourceLimitError, ToleranceError
from .exact import (EvolutionConfig, StateVector, conditional_environment, evolve_exact,
                    evolve_trotter)
from .model import (BasisIndex, ModelParams, OperatorHandle, build_operators,
                    self_evolved_site, self_evolved_system)

__all__ = [
    "BasisIndex", "Branch", "BranchEnsemble", "ConfigError", "EvolutionConfig", "ModelParams",
    "OperatorHandle", "PhaseRecord", "PointerSimError", "ResourceLimitError", "StateVector",
    "ToleranceError", "assemble_diagonal_approx", "branch_state", "build_operators",
    "capital_lambda", "conditional_environment", "evolve_exact", "evolve_trotter",
    "lambda_nu", "make_ensemble", "offdiag_element", "phase_equation_residual",
    "self_evolved_site", "self_evolved_system",
]
