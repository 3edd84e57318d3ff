"""Regularized optimal transport by Douglas-Rachford splitting."""
from .duality import DualCertificate, duality_gap, ot_cost_gradient, recover_duals
from .groups import GroupPartition
from .problem import Problem, marginal_residuals, normalize_cost, primal_objective, validate_problem
from .regularizers import Forbidden, GroupLasso, Hypentropic, Quadratic, Regularizer, WeightedL1, Zero
from .solver import (
    SolveReport,
    SolverOptions,
    SolverState,
    Termination,
    WarmStart,
    compute_skip_count,
    default_init,
    default_stepsize,
    init_state,
    solve,
    step,
)

__version__ = "0.1.0"
