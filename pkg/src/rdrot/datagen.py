"""Synthetic problem generators and the domain-adaptation pipeline.

All generators draw from ``numpy.random.Generator(PCG64(seed))``; the same
(sizes, seed) always give the same arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyClass
from .groups import GroupPartition
from .problem import Problem, normalize_cost, validate_problem


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray  # (N, d)
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (pts.shape[0],):
                raise ValueError(f"{lab.shape[0]} labels for {pts.shape[0]} points")
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, mask) -> "PointCloud":
        return PointCloud(self.points[mask], None if self.labels is None else self.labels[mask])


def rng_for(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sq_euclidean_cost(xs: np.ndarray, xt: np.ndarray) -> np.ndarray:
    """C_ij = 1/2 ||xs_i - xt_j||^2."""
    d = xs[:, None, :] - xt[None, :, :]
    return 0.5 * np.einsum("ijk,ijk->ij", d, d)


def _uniform(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def _random_cov(rng, d=2):
    A = rng.normal(size=(d, d))
    return A @ A.T + 0.1 * np.eye(d)


def gaussian_problem(m: int, n: int, seed: int = 0):
    """Two 2-D Gaussian clouds with random parameters, squared-Euclidean cost, uniform weights."""
    rng = rng_for(seed)
    mean_s, mean_t = rng.normal(scale=2.0, size=2), rng.normal(scale=2.0, size=2)
    xs = rng.multivariate_normal(mean_s, _random_cov(rng), size=m, method="cholesky")
    xt = rng.multivariate_normal(mean_t, _random_cov(rng), size=n, method="cholesky")
    problem = validate_problem(sq_euclidean_cost(xs, xt), _uniform(m), _uniform(n))
    return normalize_cost(problem), PointCloud(xs), PointCloud(xt)


def random_problem(m: int, n: int, seed: int = 0, sparse_marginals: bool = False) -> Problem:
    """Uniform random cost and random positive marginals, normalized cost.

    With ``sparse_marginals`` a random subset of atoms gets zero mass
    (at least one atom on each side keeps positive mass).
    """
    rng = rng_for(seed)
    cost = rng.random((m, n))
    p = rng.random(m) + 0.1
    q = rng.random(n) + 0.1
    if sparse_marginals:
        p[rng.random(m) < 0.3] = 0.0
        q[rng.random(n) < 0.3] = 0.0
        p[rng.integers(m)] += 0.5
        q[rng.integers(n)] += 0.5
    return normalize_cost(validate_problem(cost, p / p.sum(), q / q.sum()))


def small_suite(count: int, max_dim: int = 4, seed: int = 0):
    """``count`` seeded problems with sides drawn from 1..max_dim."""
    rng = rng_for(seed)
    out = []
    for k in range(count):
        m, n = (int(v) for v in rng.integers(1, max_dim + 1, size=2))
        out.append(random_problem(m, n, seed=seed * 100_003 + k))
    return out


def _class_clouds(rng, count: int, classes: int, separation: float, spread: float):
    labels = np.arange(count) % classes
    angles = 2 * np.pi * np.arange(classes) / classes
    centers = separation * np.column_stack([np.cos(angles), np.sin(angles)])
    pts = centers[labels] + spread * rng.normal(size=(count, 2))
    return pts, labels


def adaptation_problem(m: int, n: int, classes: int = 2, seed: int = 0, affine: str = "random",
                       separation: float = 2.0, spread: float = 0.5):
    """Labelled source cloud, affinely transformed target cloud, class-block groups.

    Labels are assigned round-robin so classes are as balanced as the sizes
    allow.  ``affine='identity'`` skips the transformation; target labels are
    kept on the returned target cloud for scoring only.
    """
    if classes < 1:
        raise ValueError("classes must be >= 1")
    rng = rng_for(seed)
    xs, ys = _class_clouds(rng, m, classes, separation, spread)
    xt0, yt = _class_clouds(rng, n, classes, separation, spread)
    if affine == "random":
        theta = rng.uniform(-np.pi / 6, np.pi / 6)
        R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        S = np.diag(rng.uniform(0.8, 1.25, size=2))
        shift = rng.normal(scale=1.0, size=2)
        xt = xt0 @ (R @ S).T + shift
    elif affine == "identity":
        xt = xt0
    else:
        raise ValueError(f"unknown affine mode {affine!r}")
    problem = normalize_cost(validate_problem(sq_euclidean_cost(xs, xt), _uniform(m), _uniform(n)))
    groups = GroupPartition.class_blocks(ys, n)
    return problem, groups, PointCloud(xs, ys), PointCloud(xt, yt)


def barycentric_map(plan, p, target: PointCloud, labels=None) -> PointCloud:
    """x_i -> (1/p_i) sum_j X_ij y_j.  Rows with p_i == 0 map to NaN."""
    plan = np.asarray(plan, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    out = np.full((plan.shape[0], target.dim), np.nan)
    live = p > 0
    out[live] = np.einsum("ij,jd->id", plan[live], target.points) / p[live, None]
    return PointCloud(out, labels)


def class_w2_score(adapted: PointCloud, target: PointCloud, tol: float = 1e-6) -> float:
    """Sum over classes of the OT value between adapted and target points of that class.

    Each class uses uniform weights, cost 1/2 ||x - y||^2, no regularization.
    """
    from .solver import SolverOptions, solve

    if adapted.labels is None or target.labels is None:
        raise ValueError("both clouds must be labelled")
    total = 0.0
    for c in np.unique(np.concatenate([adapted.labels, target.labels])):
        a = adapted.points[(adapted.labels == c) & np.all(np.isfinite(adapted.points), axis=1)]
        b = target.points[target.labels == c]
        if len(a) == 0 or len(b) == 0:
            raise EmptyClass(f"class {c!r} is empty in {'adapted' if len(a) == 0 else 'target'} cloud")
        C = sq_euclidean_cost(a, b)
        if C.max() == 0:
            continue
        prob = normalize_cost(validate_problem(C, _uniform(len(a)), _uniform(len(b))))
        rep = solve(prob, None, SolverOptions(tol_primal=tol, tol_gap=tol, max_iter=500_000))
        total += rep.objective * prob.cost_scale
    return float(total)


def label_purity(plan, source_labels, target_labels) -> float:
    """Share of transported mass that stays within a class."""
    plan = np.asarray(plan, dtype=np.float64)
    same = np.asarray(source_labels)[:, None] == np.asarray(target_labels)[None, :]
    return float(plan[same].sum() / plan.sum())
