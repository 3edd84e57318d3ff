"""Douglas-Rachford splitting for regularized optimal transport.

The iteration only stores the plan ``X`` plus a handful of length-m and
length-n vectors.  The DR auxiliary matrix is implicit::

    Y_k = X_k + phi_k 1^T + 1 psi_k^T

and one step reads::

    X_{k+1} = prox_{rho h}([Y_k - rho C]_+)

followed by a closed-form update of ``phi`` and ``psi`` that reproduces the
exact projection onto the affine marginal constraints.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NonFiniteIterate, ZeroIterations
from .problem import Problem, primal_objective
from .regularizers import Regularizer, Zero


class Termination(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    STALLED = "Stalled"


@dataclass(frozen=True)
class WarmStart:
    X: np.ndarray
    phi: np.ndarray
    psi: np.ndarray


@dataclass(frozen=True)
class SolverOptions:
    rho: float | None = None  # None: 2 / (m + n)
    max_iter: int = 100_000
    tol_primal: float = 1e-4
    tol_gap: float | None = None
    check_every: int = 1
    deterministic: bool = True
    record_trace: bool = False
    fused: bool = False
    init: WarmStart | None = None  # None: default initialization
    stall_window: int = 10_000
    stall_rtol: float = 1e-14

    def __post_init__(self):
        if self.rho is not None and not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not self.tol_primal > 0:
            raise ValueError("tol_primal must be > 0")
        if self.tol_gap is not None and not self.tol_gap > 0:
            raise ValueError("tol_gap must be > 0")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")


@dataclass(frozen=True, eq=False)
class SolverState:
    X: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    a: np.ndarray
    b: np.ndarray
    theta: float
    r: np.ndarray  # row residual X 1 - p
    s: np.ndarray  # column residual X^T 1 - q
    eta: float
    k: int = 0
    # X - rho*C, kept by the fused path after iterations that read C
    shifted: np.ndarray | None = field(default=None, repr=False)

    @property
    def r_primal(self) -> float:
        return max(float(np.linalg.norm(self.r)), float(np.linalg.norm(self.s)))

    def implicit_y(self) -> np.ndarray:
        return self.X + self.phi[:, None] + self.psi[None, :]


class TraceRecord(NamedTuple):
    iter: int
    r_primal: float
    gap: float | None
    dual_residual: float | None
    support: int
    elapsed_ms: float


@dataclass(eq=False)
class SolveReport:
    plan: np.ndarray
    objective: float
    iterations: int
    termination: Termination
    r_primal: float
    rho: float
    state: SolverState | None = None
    trace: list[TraceRecord] = field(default_factory=list)
    # first iteration from which the support set never changed again (traced runs only)
    support_stable_from: int | None = None
    gap: float | None = None
    dual_residual: float | None = None

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED


def default_stepsize(m: int, n: int) -> float:
    return 2.0 / (m + n)


def default_init(m: int, n: int):
    """Zero plan with constant offsets that skip the initial all-zero iterates."""
    c = 1.0 / (3.0 * (m + n))
    phi = np.full(m, c * (1.0 + m / (m + n)))
    psi = np.full(n, c * (1.0 + n / (m + n)))
    return np.zeros((m, n)), phi, psi


def compute_skip_count(problem: Problem, rho: float | None = None) -> int:
    """Number of all-zero iterates produced by a naive start (X0 = p q^T, zero offsets).

    The closed form assumes the default stepsize; ``rho`` is accepted for
    signature symmetry and ignored.
    """
    m, n = problem.shape
    p, q, C = problem.p, problem.q, problem.cost
    denom = m * p[:, None] + n * q[None, :] + 1.0
    vals = C * (m * n / (m + n)) / denom - 1.0
    return max(0, int(math.ceil(float(vals.min()) - 1e-12)))


def _sums(X: np.ndarray, deterministic: bool):
    if deterministic:
        return X.sum(axis=1), X.sum(axis=0)
    m, n = X.shape
    return X @ np.ones(n), np.ones(m) @ X


def init_state(problem: Problem, X0=None, phi0=None, psi0=None, deterministic: bool = True) -> SolverState:
    """Build a consistent recurrence state from (X0, phi0, psi0).

    The accumulators a, b, theta are chosen so that the following steps agree
    with DR splitting started from Y0 = X0 + phi0 1^T + 1 psi0^T.
    """
    m, n = problem.shape
    if X0 is None:
        X0, phi0, psi0 = default_init(m, n)
    X0 = np.array(X0, dtype=np.float64, copy=True)
    phi0 = np.array(phi0, dtype=np.float64, copy=True)
    psi0 = np.array(psi0, dtype=np.float64, copy=True)
    rs, cs = _sums(X0, deterministic)
    r0 = rs - problem.p
    s0 = cs - problem.q
    t0 = (r0.sum() + n * phi0.sum() + m * psi0.sum()) / (m + n)
    a0 = r0 + n * phi0 + (psi0.sum() - t0)
    b0 = s0 + m * psi0 + (phi0.sum() - t0)
    return SolverState(X0, phi0, psi0, a0, b0, 0.0, r0, s0, r0.sum() / (m + n), 0)


def step(
    state: SolverState,
    problem: Problem,
    regularizer: Regularizer,
    rho: float,
    deterministic: bool = True,
    fused: bool = False,
) -> SolverState:
    """One full iteration: clamp-prox update of X, then the phi/psi recurrence."""
    m, n = problem.shape
    phi, psi = state.phi, state.psi
    if fused and state.shifted is not None:
        V = state.shifted + phi[:, None]
        V += psi[None, :]
    else:
        V = state.X + phi[:, None]
        V += psi[None, :]
        V -= rho * problem.cost
    np.maximum(V, 0.0, out=V)
    X = regularizer.prox(V, rho)
    rs, cs = _sums(X, deterministic)
    r = rs - problem.p
    s = cs - problem.q
    eta = r.sum() / (m + n)
    if not (np.isfinite(eta) and np.isfinite(s.sum())):
        raise NonFiniteIterate(f"non-finite iterate at k={state.k + 1}; check rho and regularizer parameters")
    c = 2.0 * eta - state.theta
    phi_new = (state.a - 2.0 * r + c) / n
    psi_new = (state.b - 2.0 * s + c) / m
    shifted = None
    if fused and state.shifted is None:
        shifted = X - rho * problem.cost
    return SolverState(
        X=X,
        phi=phi_new,
        psi=psi_new,
        a=state.a - r,
        b=state.b - s,
        theta=state.theta - eta,
        r=r,
        s=s,
        eta=eta,
        k=state.k + 1,
        shifted=shifted,
    )


def _support_size(X: np.ndarray) -> int:
    return int(np.count_nonzero(X))


def solve(problem: Problem, regularizer: Regularizer | None = None, options: SolverOptions | None = None) -> SolveReport:
    from .duality import duality_gap

    regularizer = regularizer or Zero()
    options = options or SolverOptions()
    if options.max_iter == 0:
        raise ZeroIterations("max_iter must be positive")
    m, n = problem.shape
    rho = options.rho if options.rho is not None else default_stepsize(m, n)
    det = options.deterministic
    if options.init is None:
        state = init_state(problem, deterministic=det)
    else:
        w = options.init
        state = init_state(problem, w.X, w.phi, w.psi, deterministic=det)

    trace: list[TraceRecord] = []
    t0 = time.perf_counter()
    termination = Termination.MAX_ITER
    support_mask = None
    support_stable_from = None
    stall_best = math.inf
    window_best = math.inf
    cert = None

    for _ in range(options.max_iter):
        state = step(state, problem, regularizer, rho, deterministic=det, fused=options.fused)
        k = state.k
        rp = state.r_primal
        window_best = min(window_best, rp)
        if k % options.stall_window == 0:
            if stall_best < math.inf and window_best > stall_best * (1.0 - options.stall_rtol):
                termination = Termination.STALLED
                break
            stall_best = min(stall_best, window_best)
            window_best = math.inf
        if options.record_trace:
            mask = state.X > 0
            if support_mask is None or not np.array_equal(mask, support_mask):
                support_stable_from = k
                support_mask = mask
        if k % options.check_every and not options.record_trace:
            continue
        need_gap = options.record_trace or (options.tol_gap is not None and rp <= options.tol_primal)
        if need_gap:
            cert = duality_gap(problem, regularizer, state, rho)
        if options.record_trace:
            trace.append(
                TraceRecord(
                    k,
                    rp,
                    cert.gap,
                    cert.dual_residual,
                    _support_size(state.X),
                    (time.perf_counter() - t0) * 1e3,
                )
            )
        if k % options.check_every:
            continue
        if rp <= options.tol_primal:
            if options.tol_gap is None:
                termination = Termination.CONVERGED
                break
            if abs(cert.gap) <= options.tol_gap and cert.dual_residual <= options.tol_gap:
                termination = Termination.CONVERGED
                break

    if cert is None or cert.k != state.k:
        cert = duality_gap(problem, regularizer, state, rho)
    return SolveReport(
        plan=state.X,
        objective=primal_objective(problem, state.X, regularizer),
        iterations=state.k,
        termination=termination,
        r_primal=state.r_primal,
        rho=rho,
        state=state,
        trace=trace,
        support_stable_from=support_stable_from if options.record_trace else None,
        gap=cert.gap,
        dual_residual=cert.dual_residual,
    )
