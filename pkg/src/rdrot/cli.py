"""Command-line front end.

    rdrot solve  --cost C.csv --p p.csv --q q.csv --reg quad:alpha=0.01 --out plan.csv
    rdrot bench  --sizes 200x300 --alphas 5e-4,5e-3 --seeds 10 --out bench.csv
    rdrot trace  --gen gaussian --m 100 --n 100 --reg quad:alpha=1 --out trace.csv
    rdrot adapt  --source src.csv --target tgt.csv --reg gl:lambda=1e-3 --out adapted.csv
    rdrot gen    adapt --m 150 --n 100 --seed 0 --outdir data/
    rdrot replay plan.manifest --check

Every command writes ``<out>.manifest`` (JSON) next to its main output.
Exit codes: 0 converged, 1 usage or input error, 2 not converged.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from . import io as rio
from .datagen import adaptation_problem, barycentric_map, class_w2_score, gaussian_problem, sq_euclidean_cost
from .errors import EmptyClass, NoConvergence, NonFiniteIterate, NumericalUnderflow, OTError, ValidationError
from .groups import GroupPartition
from .problem import normalize_cost, validate_problem
from .regularizers import Quadratic
from .sinkhorn import SinkhornOptions, sinkhorn
from .solver import SolverOptions, Termination, solve

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2

TRACE_COLUMNS = ["iter", "r_primal", "gap", "dual_residual", "support", "elapsed_ms"]
BENCH_COLUMNS = ["method", "m", "n", "reg", "seed", "iters", "elapsed_ms", "final_residual", "objective"]


class InputError(Exception):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"cannot parse number list {text!r}") from None


def _sizes(text: str) -> list[tuple[int, int]]:
    out = []
    for tok in text.split(","):
        m, sep, n = tok.strip().lower().partition("x")
        if not sep or not m.isdigit() or not n.isdigit():
            raise InputError(f"--sizes: expected MxN, got {tok!r}")
        out.append((int(m), int(n)))
    return out


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("OT_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"OT_THREADS must be an integer, got {env!r}") from None
    return None


def _thread_limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _solver_options(args, m, n, record_trace=False) -> SolverOptions:
    return SolverOptions(
        rho=args.rho,
        max_iter=args.max_iter,
        tol_primal=args.tol,
        tol_gap=args.tol_gap,
        check_every=args.check_every,
        deterministic=args.deterministic,
        record_trace=record_trace,
    )


def _scaled_flag(flag: str, m: int, n: int, enabled: bool) -> str:
    """Multiply the strength parameter of a regularizer flag by (m + n)."""
    if not enabled:
        return flag
    name, kw = rio.parse_reg_flag(flag)
    key = {"quad": "alpha", "gl": "lambda", "wl1": "w", "hypent": "beta"}.get(name)
    if key is None:
        return flag
    if key not in kw:
        raise InputError(f"--scale-by-mn needs an explicit {key}= in --reg")
    kw[key] = kw[key] * (m + n)
    return name + ":" + ",".join(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in kw.items())


def _write_trace(path, trace, deterministic):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in trace:
            elapsed = "" if deterministic else _fmt(rec.elapsed_ms)
            w.writerow([rec.iter, _fmt(rec.r_primal), _fmt(rec.gap), _fmt(rec.dual_residual), rec.support, elapsed])


def _write_manifest(args, out, termination, inputs, outputs, extra=None, wall=None):
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "argv")}
    manifest = {
        "argv": args.argv,
        "command": args.command,
        "options": opts,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "inputs": {str(p): rio.file_digest(p) for p in inputs},
        "outputs": {str(p): rio.file_digest(p) for p in outputs},
        "wall_clock_s": None if args.deterministic else wall,
        "termination": termination,
    }
    if extra:
        manifest.update(extra)
    path = Path(str(out) + ".manifest") if not str(out).endswith(".csv") else Path(str(out)[:-4] + ".manifest")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _exit_for(termination) -> int:
    return EXIT_OK if termination == Termination.CONVERGED else EXIT_NOT_CONVERGED


# --- commands --------------------------------------------------------------

def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    cost = rio.read_matrix(args.cost)
    m, n = cost.shape
    p = rio.read_vector(args.p) if args.p else np.full(m, 1.0 / m)
    q = rio.read_vector(args.q) if args.q else np.full(n, 1.0 / n)
    problem = validate_problem(cost, p, q)
    if args.normalize:
        problem = normalize_cost(problem)
    groups = rio.read_groups(args.groups, (m, n)) if args.groups else None
    inputs = [x for x in (args.cost, args.p, args.q, args.groups) if x]
    if args.method == "rdrot":
        flag = _scaled_flag(args.reg, m, n, args.scale_by_mn)
        reg = rio.build_regularizer(flag, (m, n), groups)
        report = solve(problem, reg, _solver_options(args, m, n, record_trace=bool(args.trace)))
    else:
        if args.reg != "none":
            raise InputError("--reg applies to --method rdrot only")
        report = sinkhorn(problem, SinkhornOptions(
            epsilon=args.eps, max_iter=args.max_iter, tol=args.tol, log_domain=args.method == "sinkhorn-log",
            record_trace=bool(args.trace), deterministic=args.deterministic))
    rio.write_matrix(args.out, report.plan)
    outputs = [args.out]
    if args.trace:
        _write_trace(args.trace, report.trace, args.deterministic)
        outputs.append(args.trace)
    term = Termination(report.termination).value
    extra = {"objective": report.objective, "iterations": report.iterations, "r_primal": report.r_primal}
    _write_manifest(args, args.out, term, inputs, outputs, extra, time.perf_counter() - t0)
    print(f"{term} iterations={report.iterations} objective={report.objective!r} r_primal={report.r_primal!r}")
    return _exit_for(report.termination)


def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    sizes = _sizes(args.sizes)
    alphas = _floats(args.alphas) if args.alphas else []
    eps = _floats(args.eps) if args.eps else []
    if args.compare and args.compare != "sinkhorn":
        raise InputError(f"--compare: unknown baseline {args.compare!r}")
    if args.compare and not eps:
        raise InputError("--compare sinkhorn needs --eps")
    rows, worst = [], Termination.CONVERGED
    for m, n in sizes:
        for seed in range(args.seed, args.seed + args.seeds):
            problem, _, _ = gaussian_problem(m, n, seed)
            for a in alphas:
                a_eff = a * (m + n) if args.scale_by_mn else a
                t = time.perf_counter()
                rep = solve(problem, Quadratic(a_eff), _solver_options(args, m, n))
                rows.append(_bench_row("rdrot", m, n, f"quad:alpha={a!r}", seed, rep, t, args.deterministic))
                if rep.termination != Termination.CONVERGED:
                    worst = rep.termination
            if args.compare:
                for e in eps:
                    t = time.perf_counter()
                    rep = sinkhorn(problem, SinkhornOptions(epsilon=e, max_iter=args.max_iter, tol=args.tol,
                                                            log_domain=True, deterministic=args.deterministic))
                    rows.append(_bench_row("sinkhorn-log", m, n, f"ent:eps={e!r}", seed, rep, t, args.deterministic))
                    if rep.termination != Termination.CONVERGED:
                        worst = rep.termination
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        w.writerows(rows)
    _write_manifest(args, args.out, Termination(worst).value, [], [args.out], {"rows": len(rows)},
                    time.perf_counter() - t0)
    print(f"{len(rows)} rows -> {args.out}")
    return _exit_for(worst)


def _bench_row(method, m, n, reg, seed, rep, t, deterministic):
    # non-converged rows carry the termination reason in the method field
    if rep.termination != Termination.CONVERGED:
        method = f"{method}+{Termination(rep.termination).value}"
    elapsed = 0.0 if deterministic else (time.perf_counter() - t) * 1e3
    return [method, m, n, reg, seed, rep.iterations, _fmt(elapsed), _fmt(rep.r_primal), _fmt(rep.objective)]


def cmd_trace(args) -> int:
    t0 = time.perf_counter()
    inputs = []
    if args.cost:
        cost = rio.read_matrix(args.cost)
        m, n = cost.shape
        problem = normalize_cost(validate_problem(cost, np.full(m, 1.0 / m), np.full(n, 1.0 / n)))
        inputs.append(args.cost)
    else:
        problem, _, _ = gaussian_problem(args.m, args.n, args.seed)
        m, n = problem.shape
    if args.reg.startswith("gl"):
        raise InputError("trace does not take --groups; use solve --trace for group-lasso runs")
    reg = rio.build_regularizer(_scaled_flag(args.reg, m, n, args.scale_by_mn), (m, n))
    report = solve(problem, reg, _solver_options(args, m, n, record_trace=True))
    _write_trace(args.out, report.trace, args.deterministic)
    term = Termination(report.termination).value
    extra = {"support_stable_from": report.support_stable_from, "iterations": report.iterations}
    _write_manifest(args, args.out, term, inputs, [args.out], extra, time.perf_counter() - t0)
    print(f"{term} iterations={report.iterations} support_stable_from={report.support_stable_from}")
    return _exit_for(report.termination)


def cmd_adapt(args) -> int:
    t0 = time.perf_counter()
    src = rio.read_points(args.source)
    tgt = rio.read_points(args.target)
    if src.labels is None:
        raise InputError(f"{args.source}: source points need a 'label' column")
    if src.dim != tgt.dim:
        raise InputError(f"source is {src.dim}-D, target is {tgt.dim}-D")
    m, n = len(src), len(tgt)
    problem = normalize_cost(validate_problem(sq_euclidean_cost(src.points, tgt.points),
                                              np.full(m, 1.0 / m), np.full(n, 1.0 / n)))
    groups = GroupPartition.class_blocks(src.labels, n)
    if args.method == "rdrot":
        reg = rio.build_regularizer(_scaled_flag(args.reg, m, n, args.scale_by_mn), (m, n), groups)
        report = solve(problem, reg, _solver_options(args, m, n))
    else:
        report = sinkhorn(problem, SinkhornOptions(epsilon=args.eps, max_iter=args.max_iter, tol=args.tol,
                                                   log_domain=True, deterministic=args.deterministic))
    adapted = barycentric_map(report.plan, problem.p, tgt, src.labels)
    rio.write_points(args.out, adapted)
    score = None
    if tgt.labels is not None:
        try:
            score = class_w2_score(adapted, tgt)
        except EmptyClass as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    term = Termination(report.termination).value
    extra = {"class_w2_score": score, "iterations": report.iterations}
    _write_manifest(args, args.out, term, [args.source, args.target], [args.out], extra, time.perf_counter() - t0)
    print(f"{term} iterations={report.iterations} class_w2_score={'n/a' if score is None else repr(score)}")
    return _exit_for(report.termination)


def cmd_gen(args) -> int:
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "gaussian":
        problem, _, _ = gaussian_problem(args.m, args.n, args.seed)
        rio.write_matrix(out / "cost.csv", problem.cost)
        rio.write_vector(out / "p.csv", problem.p)
        rio.write_vector(out / "q.csv", problem.q)
    else:
        _, _, src, tgt = adaptation_problem(args.m, args.n, args.classes, args.seed)
        rio.write_points(out / "source.csv", src)
        rio.write_points(out / "target.csv", tgt)
    print(f"wrote {args.kind} data to {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("version") != __version__:
        print(f"warning: manifest from version {manifest.get('version')}, running {__version__}", file=sys.stderr)
    code = main(manifest["argv"])
    if args.check:
        for path, digest in manifest.get("outputs", {}).items():
            if rio.file_digest(path) != digest:
                print(f"mismatch: {path}", file=sys.stderr)
                return EXIT_INPUT
        print("outputs reproduced")
    return code


# --- parser ----------------------------------------------------------------

def _common(p: argparse.ArgumentParser, tol=1e-4):
    p.add_argument("--tol", type=float, default=tol, help="primal residual tolerance (2-norm)")
    p.add_argument("--tol-gap", type=float, default=None, help="also require |gap| and dual residual below this")
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--rho", type=float, default=None, help="stepsize (default 2/(m+n))")
    p.add_argument("--check-every", type=int, default=1)
    p.add_argument("--scale-by-mn", action="store_true", help="multiply the regularizer strength by m+n")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS threads (env OT_THREADS)")
    p.add_argument("--deterministic", action="store_true", help="fixed-order reductions, no timings in outputs")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rdrot", description="Regularized optimal transport by Douglas-Rachford splitting")
    ap.add_argument("--version", action="version", version=f"rdrot {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one problem from files")
    s.add_argument("--cost", required=True)
    s.add_argument("--p")
    s.add_argument("--q")
    s.add_argument("--reg", default="none")
    s.add_argument("--groups")
    s.add_argument("--method", choices=["rdrot", "sinkhorn", "sinkhorn-log"], default="rdrot")
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--normalize", action="store_true", help="divide the cost by its max entry first")
    s.add_argument("--trace")
    s.add_argument("--out", required=True)
    _common(s)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="quadratic sweep on seeded Gaussian problems")
    b.add_argument("--sizes", default="200x300")
    b.add_argument("--alphas", default="5e-4,5e-3,5e-2,2e-1")
    b.add_argument("--seeds", type=int, default=10)
    b.add_argument("--compare", default=None)
    b.add_argument("--eps", default=None)
    b.add_argument("--out", required=True)
    _common(b)
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("trace", help="one traced solve; CSV for plotting")
    t.add_argument("--cost")
    t.add_argument("--gen", choices=["gaussian"], default="gaussian")
    t.add_argument("--m", type=int, default=100)
    t.add_argument("--n", type=int, default=100)
    t.add_argument("--reg", default="none")
    t.add_argument("--out", required=True)
    _common(t)
    t.set_defaults(func=cmd_trace)

    a = sub.add_parser("adapt", help="map labelled source points into the target domain")
    a.add_argument("--source", required=True)
    a.add_argument("--target", required=True)
    a.add_argument("--reg", default="gl:lambda=1e-3")
    a.add_argument("--method", choices=["rdrot", "sinkhorn"], default="rdrot")
    a.add_argument("--eps", type=float, default=0.1)
    a.add_argument("--out", required=True)
    _common(a)
    a.set_defaults(func=cmd_adapt)

    g = sub.add_parser("gen", help="write seeded synthetic data")
    g.add_argument("kind", choices=["gaussian", "adapt"])
    g.add_argument("--m", type=int, default=150)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--outdir", required=True)
    g.set_defaults(func=cmd_gen, deterministic=True)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    r.add_argument("--check", action="store_true", help="compare output digests with the manifest")
    r.set_defaults(func=cmd_replay, deterministic=True)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    args.argv = argv
    try:
        with _thread_limit(_threads(args) if hasattr(args, "threads") else None):
            return args.func(args)
    except (InputError, ValidationError, rio.FormatError, EmptyClass, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NonFiniteIterate, NoConvergence, NumericalUnderflow) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
