"""Problem data, validation and cost normalization."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllZeroCostWarning,
    DimensionMismatch,
    MarginalSumOutOfRange,
    NegativeEntry,
)

#: marginals within this distance of 1 are left untouched
EXACT_SUM_TOL = 1e-12
#: marginals within this distance of 1 are rescaled, beyond it rejected
RENORMALIZE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Problem:
    """A discrete OT instance: cost matrix ``cost`` (m x n), marginals ``p`` (m,) and ``q`` (n,).

    ``cost_scale`` records the factor the original cost was divided by (1.0 if
    the cost was never normalized).
    """

    cost: np.ndarray
    p: np.ndarray
    q: np.ndarray
    cost_scale: float = field(default=1.0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape

    @property
    def m(self) -> int:
        return self.cost.shape[0]

    @property
    def n(self) -> int:
        return self.cost.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Problem):
            return NotImplemented
        return (
            self.cost_scale == other.cost_scale
            and np.array_equal(self.cost, other.cost)
            and np.array_equal(self.p, other.p)
            and np.array_equal(self.q, other.q)
        )

    __hash__ = None


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    a.setflags(write=False)
    return a


def _check_marginal(v: np.ndarray, name: str) -> np.ndarray:
    if np.any(v < 0):
        raise NegativeEntry(f"{name} has negative entries")
    total = v.sum()
    err = abs(total - 1.0)
    if err <= EXACT_SUM_TOL:
        return v
    if err <= RENORMALIZE_TOL:
        return v / total
    raise MarginalSumOutOfRange(f"{name} sums to {total!r}, expected 1 (tolerance {RENORMALIZE_TOL})")


def validate_problem(cost, p, q, cost_scale: float = 1.0) -> Problem:
    cost = np.asarray(cost, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if cost.ndim != 2 or p.ndim != 1 or q.ndim != 1:
        raise DimensionMismatch("cost must be 2-D and marginals 1-D")
    m, n = cost.shape
    if m < 1 or n < 1:
        raise DimensionMismatch(f"empty cost matrix of shape {cost.shape}")
    if p.shape[0] != m or q.shape[0] != n:
        raise DimensionMismatch(f"cost is {m}x{n} but len(p)={p.shape[0]}, len(q)={q.shape[0]}")
    if not (np.all(np.isfinite(cost)) and np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise ValueError("non-finite input")
    if np.any(cost < 0):
        raise NegativeEntry("cost has negative entries")
    p = _check_marginal(p, "p")
    q = _check_marginal(q, "q")
    return Problem(_readonly(cost), _readonly(p), _readonly(q), float(cost_scale))


def normalize_cost(problem: Problem) -> Problem:
    """Divide the cost by its largest entry so that max |C_ij| == 1.

    An all-zero cost is legal; it is returned unchanged and an
    :class:`AllZeroCostWarning` is emitted.
    """
    cmax = float(np.max(np.abs(problem.cost)))
    if cmax == 0.0:
        warnings.warn("cost matrix is identically zero; not normalized", AllZeroCostWarning, stacklevel=2)
        return problem
    cost = problem.cost / cmax
    return Problem(_readonly(cost), problem.p, problem.q, problem.cost_scale * cmax)


def transport_cost(problem: Problem, plan) -> float:
    plan = np.asarray(plan, dtype=np.float64)
    if plan.shape != problem.shape:
        raise DimensionMismatch(f"plan shape {plan.shape} != cost shape {problem.shape}")
    return float(np.vdot(problem.cost, plan))


def primal_objective(problem: Problem, plan, regularizer=None) -> float:
    """<C, X> + h(X)."""
    val = transport_cost(problem, plan)
    if regularizer is not None:
        val += regularizer.value(np.asarray(plan, dtype=np.float64))
    return val


def marginal_residuals(problem: Problem, plan) -> tuple[float, float]:
    plan = np.asarray(plan, dtype=np.float64)
    return (
        float(np.linalg.norm(plan.sum(axis=1) - problem.p)),
        float(np.linalg.norm(plan.sum(axis=0) - problem.q)),
    )
