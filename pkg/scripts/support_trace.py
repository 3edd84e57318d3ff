"""Support identification and local linear rate on seeded 100x100 quadratic problems.

Prints, per seed, the iteration where the support stops changing, the total
iteration count and the fit of log r_primal after that point.  With --plot
it also saves a two-panel figure of the first seed (needs matplotlib).
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from rdrot import Quadratic, SolverOptions, solve
from rdrot.datagen import gaussian_problem


def fit(y):
    x = np.arange(y.size)
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    return coef[0], 1 - resid @ resid / np.sum((y - y.mean()) ** 2)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=100)
    ap.add_argument("--alpha", type=float, default=5e-3, help="multiplied by m+n")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--tol", type=float, default=1e-12)
    ap.add_argument("--outdir", default="results/support_trace")
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    n = args.size
    good = 0
    for seed in range(args.seeds):
        P, _, _ = gaussian_problem(n, n, seed)
        rep = solve(P, Quadratic(args.alpha * 2 * n),
                    SolverOptions(tol_primal=args.tol, max_iter=1_000_000, record_trace=True))
        K = rep.support_stable_from
        slope, r2 = fit(np.log([t.r_primal for t in rep.trace[K - 1:]]))
        good += slope < 0 and r2 >= 0.9 and K < rep.iterations
        print(f"seed {seed:2d}: K={K:5d} iters={rep.iterations:6d} slope={slope:.3e} R2={r2:.3f}")
        with open(out / f"seed{seed}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "r_primal", "gap", "support"])
            w.writerows([t.iter, t.r_primal, t.gap, t.support] for t in rep.trace)
        if args.plot and seed == 0:
            import matplotlib.pyplot as plt

            fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
            it = [t.iter for t in rep.trace]
            ax[0].semilogy(it, [t.r_primal for t in rep.trace])
            ax[0].axvline(K, ls="--", c="k")
            ax[0].set_xlabel("iteration")
            ax[0].set_ylabel("primal residual")
            ax[1].plot(it, [t.support for t in rep.trace])
            ax[1].set_xlabel("iteration")
            ax[1].set_ylabel("support size")
            fig.tight_layout()
            fig.savefig(out / "seed0.png", dpi=120)
    print(f"{good}/{args.seeds} seeds: constant support before convergence, linear fit slope < 0, R2 >= 0.9")


if __name__ == "__main__":
    main()
