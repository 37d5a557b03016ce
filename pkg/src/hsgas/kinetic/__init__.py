from .collision import QuadratureReport, collision_operator_apply, equilibrium_collision_rate, weak_form_rhs
from .dsmc import DsmcResult, DsmcState, dsmc_solve, mean_free_time
from .entropy import VelocityHistogram, entropy, entropy_with_error, maxwellian_entropy
from .grid import VelocityGridField
from .kac import KacTrajectory, kac_homogeneous
from .linearized import (
    LinearizedOperatorMatrix,
    build_linearized_matrix,
    collision_invariants,
    semigroup_apply,
    semigroup_eig,
    semigroup_path,
)

__all__ = [
    "DsmcResult",
    "DsmcState",
    "KacTrajectory",
    "LinearizedOperatorMatrix",
    "QuadratureReport",
    "VelocityGridField",
    "VelocityHistogram",
    "build_linearized_matrix",
    "collision_invariants",
    "collision_operator_apply",
    "dsmc_solve",
    "entropy",
    "entropy_with_error",
    "equilibrium_collision_rate",
    "kac_homogeneous",
    "maxwellian_entropy",
    "mean_free_time",
    "semigroup_apply",
    "semigroup_eig",
    "semigroup_path",
    "weak_form_rhs",
]
