"""Quadratic-penalty sweep on seeded Gaussian problems, optionally against log-domain Sinkhorn.

    python3 scripts/quad_sweep.py --sizes 200x300 --seeds 10 --out results/sweep.csv
"""
import argparse
import csv
import time
from pathlib import Path

import numpy as np

from rdrot import Quadratic, SolverOptions, solve
from rdrot.datagen import gaussian_problem
from rdrot.problem import transport_cost
from rdrot.sinkhorn import SinkhornOptions, sinkhorn


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="200x300")
    ap.add_argument("--alphas", default="5e-4,5e-3,5e-2,2e-1", help="multiplied by m+n")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--tol", type=float, default=1e-4)
    ap.add_argument("--eps", default="", help="comma list of Sinkhorn epsilons (empty: skip)")
    ap.add_argument("--out", default="results/quad_sweep.csv")
    args = ap.parse_args()

    alphas = [float(a) for a in args.alphas.split(",")]
    eps = [float(e) for e in args.eps.split(",") if e]
    rows = []
    for size in args.sizes.split(","):
        m, n = map(int, size.lower().split("x"))
        for seed in range(args.seeds):
            P, _, _ = gaussian_problem(m, n, seed)
            for a in alphas:
                t = time.perf_counter()
                rep = solve(P, Quadratic(a * (m + n)), SolverOptions(tol_primal=args.tol, max_iter=50_000))
                rows.append(["rdrot", m, n, a, seed, rep.iterations, time.perf_counter() - t, rep.r_primal,
                             transport_cost(P, rep.plan), int(np.count_nonzero(rep.plan))])
            for e in eps:
                t = time.perf_counter()
                rep = sinkhorn(P, SinkhornOptions(epsilon=e, tol=args.tol, log_domain=True))
                rows.append(["sinkhorn-log", m, n, e, seed, rep.iterations, time.perf_counter() - t, rep.r_primal,
                             transport_cost(P, rep.plan), int(np.count_nonzero(rep.plan))])

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "m", "n", "param", "seed", "iters", "seconds", "r_primal", "transport_cost", "nnz"])
        w.writerows(rows)

    # per (method, param) medians
    keys = sorted({(r[0], r[3]) for r in rows})
    print(f"{'method':14s} {'param':>8s} {'iters':>8s} {'sec':>8s} {'cost':>10s} {'nnz':>7s}")
    for method, param in keys:
        sel = [r for r in rows if r[0] == method and r[3] == param]
        med = lambda k: np.median([r[k] for r in sel])
        print(f"{method:14s} {param:8.0e} {med(5):8.0f} {med(6):8.3f} {med(8):10.6f} {med(9):7.0f}")
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
