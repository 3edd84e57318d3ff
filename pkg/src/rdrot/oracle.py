"""Slow, independent reference solvers used to check the main code path.

Nothing here calls into :mod:`rdrot.solver` or the ``prox`` methods of the
penalties; penalty parameters are read off the instances and every formula is
re-derived locally.  Everything is dense and meant for small problems.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, TooLarge
from .problem import Problem
from .regularizers import Forbidden, GroupLasso, Hypentropic, Quadratic, Regularizer, WeightedL1, Zero


@dataclass(frozen=True, eq=False)
class OracleSolution:
    plan: np.ndarray
    value: float
    method: str  # "VertexEnum" | "ProjGrad" | "KKTProjection"


def _constraint_matrix(m: int, n: int) -> np.ndarray:
    # rows 0..m-1: row sums, rows m..m+n-1: column sums, on row-major vec(X)
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    return A


@functools.lru_cache(maxsize=64)
def _kkt_factor(m: int, n: int):
    A = _constraint_matrix(m, n)
    return A, np.linalg.pinv(A @ A.T)


def affine_project(Z, p, q) -> np.ndarray:
    """Euclidean projection onto {X : X 1 = p, X^T 1 = q} (signs unrestricted).

    Solves the KKT system X = Z - A^T lam, A vec(X) = b with a dense
    pseudo-inverse of A A^T (rank m + n - 1).
    """
    Z = np.asarray(Z, dtype=np.float64)
    m, n = Z.shape
    A, G = _kkt_factor(m, n)
    b = np.concatenate([p, q])
    lam = G @ (A @ Z.ravel() - b)
    return (Z.ravel() - A.T @ lam).reshape(m, n)


# ---------------------------------------------------------------- LP vertices


@functools.lru_cache(maxsize=None)
def _spanning_tree_bases(m: int, n: int):
    """All bases of the m x n transportation polytope with their solve maps.

    A basis is a spanning tree of the complete bipartite graph K_{m,n}; its
    basic solution is pinv(A_B) [p; q].
    """
    edges = [(i, j) for i in range(m) for j in range(n)]
    A = _constraint_matrix(m, n)
    k = m + n - 1
    trees, maps = [], []
    for combo in itertools.combinations(range(m * n), k):
        parent = list(range(m + n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for e in combo:
            i, j = edges[e]
            ri, rj = find(i), find(m + j)
            if ri == rj:
                ok = False
                break
            parent[ri] = rj
        if ok:
            trees.append(combo)
            maps.append(np.linalg.pinv(A[:, combo]))
    return np.array(trees, dtype=np.int64), np.array(maps)


def lp_vertex_solve(problem: Problem, feas_tol: float = 1e-12) -> OracleSolution:
    """Exact unregularized OT by enumerating every basic feasible solution."""
    m, n = problem.shape
    if not (m * n <= 12 or (m <= 4 and n <= 4)):
        raise TooLarge(f"vertex enumeration limited to m*n <= 12 or m, n <= 4 (got {m}x{n})")
    trees, maps = _spanning_tree_bases(m, n)
    b = np.concatenate([problem.p, problem.q])
    xb = maps @ b  # (ntrees, m+n-1)
    feasible = np.all(xb >= -feas_tol, axis=1)
    costs = (problem.cost.ravel()[trees] * xb).sum(axis=1)
    costs = np.where(feasible, costs, np.inf)
    best = int(np.argmin(costs))
    plan = np.zeros(m * n)
    plan[trees[best]] = np.maximum(xb[best], 0.0)
    return OracleSolution(plan.reshape(m, n), float(costs[best]), "VertexEnum")


# ---------------------------------------------------------------- prox oracle


def _smooth_parts(reg: Regularizer):
    """(value, gradient, lipschitz) of the part of h that is smooth on X >= 0."""
    if isinstance(reg, Zero):
        return (lambda Z: np.zeros(Z.shape[:-2]), lambda Z: np.zeros_like(Z), 0.0)
    if isinstance(reg, Quadratic):
        a = reg.alpha
        return (lambda Z: 0.5 * a * (Z * Z).sum(axis=(-2, -1)), lambda Z: a * Z, a)
    if isinstance(reg, WeightedL1):
        W = np.asarray(reg.weights, dtype=np.float64)
        return (
            lambda Z: (np.broadcast_to(W, Z.shape) * np.abs(Z)).sum(axis=(-2, -1)),
            lambda Z: np.broadcast_to(W, Z.shape).astype(np.float64),
            0.0,
        )
    if isinstance(reg, Hypentropic):
        bt = reg.beta
        return (
            lambda Z: (Z * np.arcsinh(Z / bt) - np.sqrt(Z * Z + bt * bt)).sum(axis=(-2, -1)),
            lambda Z: np.arcsinh(Z / bt),
            1.0 / bt,
        )
    if isinstance(reg, Forbidden):
        return (lambda Z: np.zeros(Z.shape[:-2]), lambda Z: np.zeros_like(Z), 0.0)
    raise TypeError(f"no smooth model for {type(reg).__name__}")


def _group_matrix(groups, shape) -> np.ndarray:
    m, n = shape
    M = np.zeros((len(groups.groups), m * n))
    for k, g in enumerate(groups.groups):
        M[k, g] = 1.0
    return M


def prox_oracle(reg: Regularizer, V, rho: float, cost=None, iters: int = 10_000) -> np.ndarray:
    """argmin_{Z >= 0} rho <C, Z> + rho h(Z) + ||Z - V||^2 / 2 by projected gradient.

    ``V`` may carry leading batch dimensions.  With ``cost=None`` and V >= 0
    this is the plain proximal map of h (whose minimizer is non-negative
    anyway); with a cost it is the prox of <C,.> + indicator(X >= 0) + h.
    """
    V = np.asarray(V, dtype=np.float64)
    C = np.zeros(V.shape[-2:]) if cost is None else np.asarray(cost, dtype=np.float64)
    W = V - rho * C
    if isinstance(reg, GroupLasso):
        return _group_lasso_prox_oracle(reg, W, rho, iters)
    _, grad, L = _smooth_parts(reg)
    mask = reg.mask if isinstance(reg, Forbidden) else None
    step = 1.0 / (1.0 + rho * L)
    Z = np.maximum(W, 0.0)
    if mask is not None:
        Z = np.where(mask, 0.0, Z)
    for _ in range(iters):
        Z_new = np.maximum(Z - step * (rho * grad(Z) + Z - W), 0.0)
        if mask is not None:
            Z_new = np.where(mask, 0.0, Z_new)
        if np.array_equal(Z_new, Z):
            break
        Z = Z_new
    return Z


def _group_lasso_prox_oracle(reg: GroupLasso, W, rho, iters):
    # Dual ascent: rho*lam*||z_g|| = max_{||u_g|| <= rho*lam} <u_g, z_g>, and the
    # inner minimizer over z >= 0 is [W - U]_+.  Accelerated projected gradient.
    shape = W.shape[-2:]
    M = _group_matrix(reg.groups, shape)
    grouped = M.sum(axis=0) > 0
    radius = rho * reg.lam
    flatW = W.reshape(W.shape[:-2] + (-1,))

    def project(U):
        U = np.where(grouped, U, 0.0)
        norms = np.sqrt((U * U) @ M.T)
        scale = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
        return U * (scale @ M + (~grouped))

    U = np.zeros_like(flatW)
    Uprev = U
    t = 1.0
    for _ in range(iters):
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        E = U + ((t - 1.0) / t_next) * (U - Uprev)
        Uprev = U
        U = project(E + np.maximum(flatW - E, 0.0))
        t = t_next
    return np.maximum(flatW - U, 0.0).reshape(W.shape)


# ---------------------------------------------------------------- OT oracle


def _quadratic_kkt(problem: Problem, alpha: float, support: np.ndarray, max_rounds: int = 200):
    """Primal-dual active set on the quadratic OT optimality system.

    Given a support guess, solve alpha*X_ij + C_ij = mu_i + nu_j on the
    support with exact marginals, then reset the support to
    {mu_i + nu_j > C_ij}.  Stops when the support repeats.
    """
    m, n = problem.shape
    C = problem.cost
    seen = set()
    for _ in range(max_rounds):
        key = support.tobytes()
        if key in seen:
            break
        seen.add(key)
        idx = np.flatnonzero(support.ravel())
        ii, jj = np.divmod(idx, n)
        s = idx.size
        N = s + m + n
        K = np.zeros((s + m + n, N))
        rhs = np.zeros(s + m + n)
        K[np.arange(s), np.arange(s)] = alpha
        K[np.arange(s), s + ii] = -1.0
        K[np.arange(s), s + m + jj] = -1.0
        rhs[:s] = -C.ravel()[idx]
        K[s + ii, np.arange(s)] = 1.0
        K[s + m + jj, np.arange(s)] = 1.0
        rhs[s:s + m] = problem.p
        rhs[s + m:] = problem.q
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        mu, nu = sol[s:s + m], sol[s + m:]
        slack = mu[:, None] + nu[None, :] - C
        support = slack > 0
    X = np.maximum(slack, 0.0) / alpha
    return X, mu, nu


def _quadratic_dual_newton(problem: Problem, alpha: float, mu, nu, max_iter: int = 500):
    """Damped semismooth Newton ascent on the smooth quadratic-OT dual

        D(mu, nu) = p.mu + q.nu - ||[mu 1^T + 1 nu^T - C]_+||^2 / (2 alpha).
    """
    m, n = problem.shape
    C, p, q = problem.cost, problem.p, problem.q
    A = _constraint_matrix(m, n)

    def dual(mu, nu):
        sl = np.maximum(mu[:, None] + nu[None, :] - C, 0.0)
        return p @ mu + q @ nu - 0.5 * np.vdot(sl, sl) / alpha, sl

    val, sl = dual(mu, nu)
    for _ in range(max_iter):
        X = sl / alpha
        g = np.concatenate([p - X.sum(axis=1), q - X.sum(axis=0)])
        if np.abs(g).max() < 1e-14:
            break
        act = (sl > 0).ravel()
        H = A[:, act] @ A[:, act].T
        d = np.linalg.lstsq(H + 1e-10 * np.eye(m + n), alpha * g, rcond=None)[0]
        step = 1.0
        while step > 1e-12:
            mu_t, nu_t = mu + step * d[:m], nu + step * d[m:]
            val_t, sl_t = dual(mu_t, nu_t)
            if val_t >= val + 1e-4 * step * (g @ d):
                break
            step *= 0.5
        mu, nu, val, sl = mu_t, nu_t, val_t, sl_t
    return sl / alpha, mu, nu


def projgrad_solve(problem: Problem, regularizer: Regularizer | None = None, iters: int = 2_000,
                   inner: int = 20, polish: bool = True) -> OracleSolution:
    """Reference minimizer of <C,X> + h(X) over the transport polytope.

    Accelerated projected gradient where each projection onto the polytope is
    computed with Dykstra's alternating projections (affine set, orthant).
    For the group-lasso penalty the orthant step is replaced by the prox of
    h + indicator(X >= 0) inside a Dykstra-like proximal splitting.  For the
    quadratic penalty the result is polished with an exact active-set KKT
    solve.
    """
    reg = regularizer or Zero()
    m, n = problem.shape
    C = problem.cost
    p, q = problem.p, problem.q
    if isinstance(reg, GroupLasso):
        fval = lambda Z: 0.0
        grad = lambda Z: np.zeros_like(Z)
        L = 0.0
        M = _group_matrix(reg.groups, (m, n))
        grouped = M.sum(axis=0) > 0
    else:
        fval, grad, L = _smooth_parts(reg)
    mask = reg.mask if isinstance(reg, Forbidden) else None
    # a tiny curvature would give a huge step that Dykstra cannot project
    t = min(1.0 / L, 1.0) if L > 0 else 1.0

    def nonsmooth_prox(Z):
        Z = np.maximum(Z, 0.0)
        if mask is not None:
            Z = np.where(mask, 0.0, Z)
        if isinstance(reg, GroupLasso):
            z = Z.ravel()
            norms = np.sqrt((z * z) @ M.T)
            thr = t * reg.lam
            scale = np.where(norms > thr, 1.0 - thr / np.maximum(norms, 1e-300), 0.0)
            Z = (z * (scale @ M + (~grouped))).reshape(m, n)
        return Z

    def project(Z, n_inner):
        # Dykstra-like splitting.  With a group penalty the iterates depend on
        # an exact prox of the sum, so sweeps continue until they settle.
        x, pp, qq = Z, np.zeros_like(Z), np.zeros_like(Z)
        for k in range(max(n_inner, 20_000) if isinstance(reg, GroupLasso) else n_inner):
            y = affine_project(x + pp, p, q)
            pp = x + pp - y
            x_new = nonsmooth_prox(y + qq)
            qq = y + qq - x_new
            done = k >= n_inner and np.max(np.abs(x_new - x)) < 1e-15
            x = x_new
            if done:
                break
        return x

    X = np.outer(p, q)
    Xprev = X
    tk = 1.0
    for _ in range(iters):
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        Yk = X + ((tk - 1.0) / tn) * (X - Xprev)
        Xprev = X
        X = project(Yk - t * (C + grad(Yk)), inner)
        tk = tn
        if np.max(np.abs(X - Xprev)) < 1e-15:
            break
    X = affine_project(np.maximum(X, 0.0), p, q)

    if polish and isinstance(reg, Quadratic):
        a = reg.alpha
        # the KKT system has condition number ~ 1/alpha
        kkt_tol = max(1e-11, 1e-14 / a)
        Xk, mu, nu = _quadratic_kkt(problem, a, X > 1e-10)
        if quadratic_kkt_residual(problem, a, Xk, mu, nu) > kkt_tol:
            Xk, mu, nu = _quadratic_dual_newton(problem, a, mu, nu)
            Xk, mu, nu = _quadratic_kkt(problem, a, Xk > 0)
        if quadratic_kkt_residual(problem, a, Xk, mu, nu) > kkt_tol:
            raise NoConvergence("quadratic KKT polish failed")
        val = float(np.vdot(C, Xk)) + 0.5 * a * float(np.vdot(Xk, Xk))
        return OracleSolution(Xk, val, "KKTProjection")
    val = float(np.vdot(C, X)) + float(fval(X))
    if isinstance(reg, GroupLasso):
        val += reg.lam * float(np.sqrt((X.ravel() ** 2) @ M.T).sum())
    if not np.isfinite(val):
        raise NoConvergence("reference solve produced a non-finite value")
    return OracleSolution(X, val, "ProjGrad")


def quadratic_kkt_residual(problem: Problem, alpha: float, X, mu, nu) -> float:
    """Largest violation of the quadratic OT optimality conditions."""
    C = problem.cost
    slack = alpha * X + C - mu[:, None] - nu[None, :]
    viol = [
        np.abs(X.sum(axis=1) - problem.p).max(),
        np.abs(X.sum(axis=0) - problem.q).max(),
        max(0.0, -X.min()),
        max(0.0, -slack.min()),
        np.abs(slack * X).max(),
    ]
    return float(max(viol))


def ot_value(problem: Problem, regularizer: Regularizer | None = None) -> float:
    reg = regularizer or Zero()
    if isinstance(reg, Zero):
        return lp_vertex_solve(problem).value
    return projgrad_solve(problem, reg).value


def finite_diff_gradient(problem: Problem, regularizer: Regularizer | None = None, eps: float = 1e-5,
                         value_fn=None) -> np.ndarray:
    """Central differences of C -> OT_h(C), one cost entry at a time."""
    value_fn = value_fn or ot_value
    m, n = problem.shape
    G = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            E = np.zeros((m, n))
            E[i, j] = eps
            plus = Problem(problem.cost + E, problem.p, problem.q)
            minus = Problem(np.maximum(problem.cost - E, 0.0), problem.p, problem.q)
            h = (plus.cost[i, j] - minus.cost[i, j])
            G[i, j] = (value_fn(plus, regularizer) - value_fn(minus, regularizer)) / h
    return G
