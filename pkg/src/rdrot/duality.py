"""Dual potentials, duality gap and the gradient of the OT value w.r.t. the cost."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import Problem, transport_cost
from .regularizers import Regularizer


@dataclass(frozen=True, eq=False)
class DualCertificate:
    mu: np.ndarray
    nu: np.ndarray
    dual_value: float
    gap: float
    dual_residual: float
    k: int = 0

    def potential_matrix(self) -> np.ndarray:
        """The dual variable U = mu 1^T + 1 nu^T."""
        return self.mu[:, None] + self.nu[None, :]


def recover_duals(state, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Marginal potentials (mu, nu) = (phi / rho, psi / rho)."""
    return state.phi / rho, state.psi / rho


def duality_gap(problem: Problem, regularizer: Regularizer, state, rho: float) -> DualCertificate:
    """Gap and dual residual at the current iterate.

    gap = <C, X> + h(X) - (p.mu + q.nu) + h*(rho^-1 [Xbar - X]_+) with
    Xbar = [X + phi 1^T + 1 psi^T - rho C]_+.  For penalties whose conjugate
    is an indicator the h* term is dropped and its constraint violation is
    reported as the dual residual instead.
    """
    X = state.X
    mu, nu = recover_duals(state, rho)
    Xbar = X + state.phi[:, None]
    Xbar += state.psi[None, :]
    Xbar -= rho * problem.cost
    np.maximum(Xbar, 0.0, out=Xbar)
    hx = regularizer.value(X)
    hstar = regularizer.conjugate_gap_term(X, Xbar, rho)
    dual_value = float(problem.p @ mu + problem.q @ nu) - hstar
    gap = transport_cost(problem, X) + hx - dual_value
    return DualCertificate(
        mu=mu,
        nu=nu,
        dual_value=dual_value,
        gap=float(gap),
        dual_residual=float(regularizer.dual_residual(X, Xbar, rho)),
        k=state.k,
    )


def ot_cost_gradient(problem: Problem, regularizer: Regularizer | None = None, options=None):
    """Regularized OT value and its gradient with respect to the cost.

    The gradient of C -> min_X <C, X> + h(X) over the transport polytope is
    the optimal plan X*.  Without strong convexity the optimum may not be
    unique and the plan is one (Clarke) subgradient.  The sign convention is
    that of the minimum value, so ascent on the OT value moves along +X*.
    """
    from .solver import SolverOptions, solve

    options = options or SolverOptions(tol_primal=1e-9, max_iter=1_000_000)
    report = solve(problem, regularizer, options)
    return report.objective, report.plan
