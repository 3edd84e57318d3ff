"""Toy two-class domain adaptation: group-lasso vs unregularized vs entropic mapping.

For each seed the source cloud is mapped into the target domain with the
barycentric map of each plan, then scored by the per-class transport cost
between mapped and target points (lower is better).
"""
import argparse

import numpy as np

from rdrot import GroupLasso, SolverOptions, solve
from rdrot.datagen import adaptation_problem, barycentric_map, class_w2_score, label_purity
from rdrot.sinkhorn import SinkhornOptions, sinkhorn


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--m", type=int, default=150)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--lam", type=float, default=1e-3)
    ap.add_argument("--eps", type=float, default=1e-1)
    ap.add_argument("--tol", type=float, default=1e-4)
    ap.add_argument("--separation", type=float, default=2.0)
    args = ap.parse_args()

    print(f"{'seed':>4s} {'gl':>9s} {'plain':>9s} {'entropic':>9s} {'purity gl':>9s} {'purity plain':>12s}")
    table = []
    for seed in range(args.seeds):
        P, groups, src, tgt = adaptation_problem(args.m, args.n, 2, seed, separation=args.separation)
        opts = SolverOptions(tol_primal=args.tol, max_iter=200_000)
        plans = [
            solve(P, GroupLasso(args.lam, groups), opts).plan,
            solve(P, None, opts).plan,
            sinkhorn(P, SinkhornOptions(epsilon=args.eps, tol=args.tol, log_domain=True)).plan,
        ]
        scores = [class_w2_score(barycentric_map(X, P.p, tgt, src.labels), tgt) for X in plans]
        pur = [label_purity(X, src.labels, tgt.labels) for X in plans[:2]]
        table.append(scores)
        print(f"{seed:4d} {scores[0]:9.5f} {scores[1]:9.5f} {scores[2]:9.5f} {pur[0]:9.3f} {pur[1]:12.3f}")
    t = np.array(table)
    print(f"gl <= plain: {np.sum(t[:, 0] <= t[:, 1])}/{len(t)}   plain <= entropic: {np.sum(t[:, 1] <= t[:, 2])}/{len(t)}")


if __name__ == "__main__":
    main()
