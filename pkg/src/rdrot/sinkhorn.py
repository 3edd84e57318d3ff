"""Entropic OT baselines: Sinkhorn-Knopp scaling, plain and log-domain."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalUnderflow
from .problem import Problem, transport_cost
from .solver import SolveReport, Termination, TraceRecord


@dataclass(frozen=True)
class SinkhornOptions:
    epsilon: float = 1e-1
    max_iter: int = 100_000
    tol: float = 1e-6
    check_every: int = 10
    log_domain: bool = False
    record_trace: bool = False
    deterministic: bool = True  # fixed-order reductions instead of BLAS matvecs

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")


def sinkhorn_plan_marginal_error(plan, p, q) -> tuple[float, float]:
    plan = np.asarray(plan)
    return float(np.linalg.norm(plan.sum(axis=1) - p)), float(np.linalg.norm(plan.sum(axis=0) - q))


def _entropic_objective(C, X, eps):
    pos = X > 0
    return float(np.vdot(C, X) + eps * np.sum(X[pos] * np.log(X[pos])))


def sinkhorn_iterates(problem: Problem, options: SinkhornOptions):
    """Yield the plan after every full (row + column) scaling sweep.

    Works on the positive-mass sub-problem; yielded plans have the reduced
    shape.  Intended for inspection and tests.
    """
    rows = problem.p > 0
    cols = problem.q > 0
    C = problem.cost[np.ix_(rows, cols)]
    p, q = problem.p[rows], problem.q[cols]
    eps = options.epsilon
    if options.log_domain:
        f = np.zeros(p.size)
        g = np.zeros(q.size)
        lp, lq = np.log(p), np.log(q)
        while True:
            f = eps * (lp - logsumexp((g[None, :] - C) / eps, axis=1))
            g = eps * (lq - logsumexp((f[:, None] - C) / eps, axis=0))
            yield np.exp((f[:, None] + g[None, :] - C) / eps)
    else:
        K = np.exp(-C / eps)
        v = np.ones(q.size)
        if options.deterministic:
            def mv(A, x):
                return (A * x[None, :]).sum(axis=1)

            def rmv(A, x):
                return (A * x[:, None]).sum(axis=0)
        else:
            def mv(A, x):
                return A @ x

            def rmv(A, x):
                return A.T @ x
        while True:
            Kv = mv(K, v)
            if np.any(Kv <= 0) or not np.all(np.isfinite(Kv)):
                raise NumericalUnderflow(f"kernel underflow at epsilon={eps}; use the log-domain variant")
            u = p / Kv
            Ktu = rmv(K, u)
            if np.any(Ktu <= 0) or not np.all(np.isfinite(Ktu)):
                raise NumericalUnderflow(f"kernel underflow at epsilon={eps}; use the log-domain variant")
            v = q / Ktu
            yield u[:, None] * K * v[None, :]


def sinkhorn(problem: Problem, options: SinkhornOptions | None = None) -> SolveReport:
    """Entropic OT, min <C, X> + eps sum X log X, by alternating scaling.

    Rows and columns with zero mass are removed before scaling and restored
    as zeros in the returned plan.  ``objective`` is the entropic objective;
    use :func:`rdrot.problem.transport_cost` for <C, X>.
    """
    options = options or SinkhornOptions()
    rows = problem.p > 0
    cols = problem.q > 0
    p, q = problem.p[rows], problem.q[cols]
    if not options.log_domain:
        Cr = problem.cost[np.ix_(rows, cols)]
        if np.any(np.exp(-Cr / options.epsilon).max(axis=1) == 0) or np.any(np.exp(-Cr / options.epsilon).max(axis=0) == 0):
            raise NumericalUnderflow(f"kernel underflow at epsilon={options.epsilon}; use the log-domain variant")
    trace: list[TraceRecord] = []
    t0 = time.perf_counter()
    termination = Termination.MAX_ITER
    err = np.inf
    Xr = None
    k = 0
    for k, Xr in enumerate(sinkhorn_iterates(problem, options), start=1):
        if k % options.check_every == 0 or k == options.max_iter:
            err = max(sinkhorn_plan_marginal_error(Xr, p, q))
            if options.record_trace:
                trace.append(TraceRecord(k, err, None, None, int(np.count_nonzero(Xr)), (time.perf_counter() - t0) * 1e3))
            if err <= options.tol:
                termination = Termination.CONVERGED
                break
        if k >= options.max_iter:
            break
    X = np.zeros(problem.shape)
    X[np.ix_(rows, cols)] = Xr
    return SolveReport(
        plan=X,
        objective=_entropic_objective(problem.cost, X, options.epsilon),
        iterations=k,
        termination=termination,
        r_primal=float(err),
        rho=float("nan"),
        trace=trace,
    )


__all__ = ["SinkhornOptions", "sinkhorn", "sinkhorn_iterates", "sinkhorn_plan_marginal_error", "transport_cost"]
