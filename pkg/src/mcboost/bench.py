"""Benchmark and solver command line.

Subcommands::

    scaling      runtime of the five methods over a list of sizes
    convergence  error of the walk estimator against the number of walks
    solve        solve a Matrix Market system with one method
    fredholm     point estimate of a catalog Fredholm equation
    generate     export a generated problem as Matrix Market + CSV

Exit codes: 0 success, 2 bad configuration, 3 unreadable or malformed
input, 4 solver failure.
"""
import argparse
import csv
import statistics
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fredholm as fh
from .baselines import IterSolveConfig, gauss_seidel_solve, jacobi_solve
from .boost import GREEDY, PPS, BoostConfig, Sampled, boost_solve
from .core import LinearSystem, build_fixed_point, check_convergence, direct_solve, residual
from .errors import McBoostError, ParseError
from .io import read_matrix_market, read_vector_csv, write_matrix_market, write_vector_csv
from .problems import gen_diag_dominant, gen_halton_dense
from .walk import (ADJOINT, FORWARD, WalkConfig, adjoint_estimate, forward_estimate_components,
                   kernel_from_operator)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_SOLVER = 4

METHODS = ("jacobi", "gauss-seidel", "plain-mc", "exact-seq-mc", "sampled-seq-mc")
DESK_SIZES = (100, 200, 400, 800)
FULL_SIZES = (1000, 2000, 3000, 4000, 5000)
WALK_GRID = (10, 25, 50, 100, 250, 500, 1000)

#: columns that hold wall-clock measurements and may differ between runs
RUNTIME_COLUMNS = ("runtime_seconds", "setup_seconds")

SCALING_HEADER = ("method", "m", "seed", "repeats", "runtime_seconds", "setup_seconds",
                  "relative_residual", "residual_kind", "iterations", "n_walks",
                  "components", "sample_cols")
CONVERGENCE_HEADER = ("m", "n_walks", "seed", "l2_error", "runtime_seconds")


class ConfigError(Exception):
    """Invalid combination of command-line options."""


@dataclass
class BenchRecord:
    method: str
    m: int
    runtime_seconds: float
    relative_residual: float
    extra: dict = field(default_factory=dict)

    def row(self):
        base = {"method": self.method, "m": self.m, "runtime_seconds": _fmt(self.runtime_seconds),
                "relative_residual": _fmt(self.relative_residual)}
        base.update({k: _fmt(v) for k, v in self.extra.items()})
        return [base.get(c, "") for c in SCALING_HEADER]


@dataclass
class ConvergenceRecord:
    n_walks: int
    l2_error: float
    runtime_seconds: float


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


@dataclass(frozen=True)
class MethodConfig:
    walks: int = 1000
    rounds: int = 10
    sample_cols: int = 20
    design: str = GREEDY
    components: int = 5
    target_residual: float = 1e-6
    threads: int = 1
    seed: int = 0


def _relres(system, x):
    return float(np.linalg.norm(residual(system, x)) / np.linalg.norm(system.rhs))


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return time.perf_counter() - t0, out


def _mc_setup(system, mode):
    """Fixed-point form, radius estimate and walk kernel: one-off work, timed apart."""
    fp = check_convergence(build_fixed_point(system))
    v = np.ones(fp.size) if mode == FORWARD else np.asarray(fp.a_vec)
    kernel = kernel_from_operator(fp.h_matrix, v, mode, WalkConfig().termination, fp.rho)
    return fp, kernel


def run_method(method, system, cfg=MethodConfig()):
    """Run one method once; returns ``(record, solution)``.

    Deterministic methods iterate to ``cfg.target_residual``; the Monte Carlo
    methods spend a fixed budget and report what they reached.  For the Monte
    Carlo methods the fixed-point form, spectral radius estimate and walk
    kernel are built first and timed separately as ``setup_seconds``.
    """
    m = system.size
    extra = {"seed": cfg.seed}
    if method in ("jacobi", "gauss-seidel"):
        solver = jacobi_solve if method == "jacobi" else gauss_seidel_solve
        it_cfg = IterSolveConfig(max_iters=10_000, tol=cfg.target_residual)
        secs, res = _timed(lambda: solver(system, it_cfg))
        extra.update(iterations=res.iters_used, residual_kind="residual")
        return BenchRecord(method, m, secs, res.final_relative_residual, extra), res.x

    walk = WalkConfig(n_walks=cfg.walks, seed=cfg.seed, workers=cfg.threads)
    if method == "plain-mc":
        setup, (fp, kernel) = _timed(lambda: _mc_setup(system, FORWARD))
        comps = np.linspace(0, m - 1, min(cfg.components, m)).astype(np.int64)
        wc = replace(walk, kernel=kernel)
        secs, rep = _timed(lambda: forward_estimate_components(fp, comps, wc))
        ref = direct_solve(system.matrix, system.rhs)[comps]
        err = float(np.linalg.norm(rep.estimate - ref) / np.linalg.norm(ref))
        extra.update(setup_seconds=setup, n_walks=cfg.walks, components=comps.size,
                     residual_kind="component_error")
        x = np.full(m, np.nan)
        x[comps] = rep.estimate
        return BenchRecord(method, m, secs, err, extra), x

    if method in ("exact-seq-mc", "sampled-seq-mc"):
        setup, (fp, kernel) = _timed(lambda: _mc_setup(system, ADJOINT))
        inner = replace(walk, exact_initial_term=True, kernel=kernel)
        variant = "exact"
        if method == "sampled-seq-mc":
            variant = Sampled(min(cfg.sample_cols, m), cfg.design)
            extra["sample_cols"] = variant.sample_cols
        bc = BoostConfig(inner=inner, rounds=cfg.rounds, target_residual=cfg.target_residual,
                         variant=variant)
        secs, res = _timed(lambda: boost_solve(fp, bc))
        extra.update(setup_seconds=setup, n_walks=cfg.walks, iterations=res.rounds_used,
                     residual_kind="residual", kappa=res.kappa_estimate)
        return BenchRecord(method, m, secs, _relres(system, res.x), extra), res.x

    raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def cmd_scaling(sizes, methods, seed=0, repeats=3, cfg=MethodConfig()):
    """Median-of-``repeats`` runtime for every (size, method) cell.

    Repeats are interleaved round-robin over the cells, so slow drift in
    machine speed spreads evenly over all sizes instead of biasing the
    runtime ratios.  Each cell gets one discarded warm-up run first.
    """
    if not sizes:
        raise ConfigError("sizes must be nonempty")
    for name in methods:
        if name not in METHODS:
            raise ConfigError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    cfg = replace(cfg, seed=seed)
    cells = [(m, name) for m in sizes for name in methods]
    runs = {cell: [] for cell in cells}
    for r in range(repeats):
        for m in sizes:
            system = gen_diag_dominant(m, seed=seed)
            for name in methods:
                if r == 0:
                    run_method(name, system, cfg)  # warm-up, discarded
                runs[(m, name)].append(run_method(name, system, cfg)[0])
    records = []
    for cell in cells:
        rs = runs[cell]
        rec = rs[0]
        rec.runtime_seconds = statistics.median(x.runtime_seconds for x in rs)
        if "setup_seconds" in rec.extra:
            rec.extra["setup_seconds"] = statistics.median(x.extra["setup_seconds"] for x in rs)
        rec.extra["repeats"] = repeats
        records.append(rec)
    return records


def cmd_convergence(m=1000, walk_grid=WALK_GRID, seed=0, threads=1, estimator=FORWARD):
    """Error ``||x_true - x_hat_M||_2`` of the walk estimate for each ``M`` in the grid.

    With the forward estimator every component gets ``M`` walks; with the
    adjoint estimator ``M`` walks estimate the whole vector.
    """
    if not walk_grid:
        raise ConfigError("walk grid must be nonempty")
    if m < 2:
        raise ConfigError("m must be >= 2")
    fp, x_true = gen_halton_dense(m, seed)
    fp = check_convergence(fp)
    mode = FORWARD if estimator == FORWARD else ADJOINT
    v = np.ones(m) if mode == FORWARD else np.asarray(fp.a_vec)
    kernel = kernel_from_operator(fp.h_matrix, v, mode, WalkConfig().termination, fp.rho)
    records = []
    for n in walk_grid:
        cfg = WalkConfig(n_walks=int(n), seed=seed, workers=threads, kernel=kernel)
        if mode == FORWARD:
            secs, rep = _timed(lambda: forward_estimate_components(fp, np.arange(m), cfg))
        else:
            secs, rep = _timed(lambda: adjoint_estimate(fp, cfg))
        records.append(ConvergenceRecord(int(n), float(np.linalg.norm(x_true - rep.estimate)), secs))
    return records


def reference_curve(records):
    """``e_0 * sqrt(M_0 / M)``, anchored at the first grid point."""
    m0, e0 = records[0].n_walks, records[0].l2_error
    return [(r.n_walks, e0 * (m0 / r.n_walks) ** 0.5) for r in records]


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh_:
        w = csv.writer(fh_, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _load_system(matrix_path, rhs_path):
    a = read_matrix_market(matrix_path)
    b = read_vector_csv(rhs_path)
    if a.shape[0] != a.shape[1]:
        raise ParseError(str(matrix_path), 2, f"matrix must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ParseError(str(rhs_path), 1, f"right-hand side has {b.shape[0]} entries, matrix has {a.shape[0]} rows")
    return LinearSystem(a, b)


def cmd_solve(matrix_path, rhs_path, method, cfg=MethodConfig()):
    """Solve a system from files; returns ``(solution, report_lines)``."""
    system = _load_system(matrix_path, rhs_path)
    if method == "direct":
        secs, x = _timed(lambda: direct_solve(system.matrix, system.rhs))
        rec = BenchRecord("direct", system.size, secs, _relres(system, x), {"seed": cfg.seed})
    elif method == "plain-mc":
        comps = system.size
        rec, x = run_method(method, system, replace(cfg, components=comps))
    else:
        rec, x = run_method(method, system, cfg)
    lines = [f"method: {rec.method}", f"size: {rec.m}",
             f"relative_residual: {rec.relative_residual:.6e}"]
    for k in ("residual_kind", "iterations", "n_walks", "sample_cols", "kappa", "seed"):
        if k in rec.extra:
            lines.append(f"{k}: {rec.extra[k]}")
    lines.append(f"runtime_seconds: {rec.runtime_seconds:.6f}")
    return x, lines


_G_FUNCS = {
    "one": lambda x: np.ones_like(x),
    "x": lambda x: x,
    "cos": np.cos,
}


def cmd_fredholm(kernel, params=(), x0=0.5, n_walks=100_000, seed=0, g="one", survival=0.8,
                 threads=1, n_nodes=200):
    """Walk estimate of ``f(x0)`` next to the Nystrom value; returns a dict row."""
    if g not in _G_FUNCS:
        raise ConfigError(f"unknown g {g!r}; choose from {sorted(_G_FUNCS)}")
    try:
        k = fh.kernel_from_catalog(kernel, *params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not k.contains(x0):
        raise ConfigError(f"x0 = {x0} lies outside [{k.lo}, {k.hi}]")
    g_fn = _G_FUNCS[g]
    walk = fh.default_subwalk(k, survival)
    secs, rep = _timed(lambda: fh.fredholm_estimate(k, g_fn, walk, x0, n_walks, seed, workers=threads))
    nys = float(fh.nystrom_solve(k, g_fn, x0, n_nodes)[0])
    est = float(rep.estimate[0])
    tol = fh.combined_tolerance(rep)
    return {
        "kernel": k.name, "g": g, "x0": x0, "seed": seed, "n_walks": n_walks,
        "estimate": est, "std_error": float(rep.std_error[0]), "nystrom": nys,
        "gap": abs(est - nys), "tolerance": tol, "within_tolerance": abs(est - nys) <= tol,
        "mean_kill_time": rep.mean_walk_length, "n_flagged": rep.n_flagged,
        "n_truncated": rep.n_truncated, "runtime_seconds": secs,
    }


def cmd_generate(kind, m, seed, out):
    """Write ``matrix.mtx`` and ``rhs.csv`` (plus ``x_true.csv`` for the dense instance)."""
    out.mkdir(parents=True, exist_ok=True)
    if kind == "diag-dominant":
        system = gen_diag_dominant(m, seed=seed)
        write_matrix_market(out / "matrix.mtx", system.matrix, f"diag-dominant m={m} seed={seed}")
        write_vector_csv(out / "rhs.csv", system.rhs, "b")
        return [out / "matrix.mtx", out / "rhs.csv"]
    if kind == "halton-dense":
        fp, x = gen_halton_dense(m, seed)
        write_matrix_market(out / "matrix.mtx", np.eye(m) - fp.h_matrix,
                            f"I - H, H_ij = 0.9/(m+i+j), m={m} seed={seed}")
        write_vector_csv(out / "rhs.csv", fp.a_vec, "b")
        write_vector_csv(out / "x_true.csv", x, "x")
        return [out / "matrix.mtx", out / "rhs.csv", out / "x_true.csv"]
    raise ConfigError(f"unknown problem kind {kind!r}")


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("expected positive integers")
    return vals


def _method_list(text):
    if text == "all":
        return list(METHODS)
    return [v.strip() for v in text.split(",") if v.strip()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="walk worker threads")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")

    budget = argparse.ArgumentParser(add_help=False)
    budget.add_argument("--walks", type=int, default=1000, help="walks per estimate or per round")
    budget.add_argument("--rounds", type=int, default=10, help="boosting rounds")
    budget.add_argument("--sample-cols", type=int, default=20)
    budget.add_argument("--design", choices=(GREEDY, PPS), default=GREEDY,
                        help="column design for sampled-seq-mc")
    budget.add_argument("--target-residual", type=float, default=1e-6)
    budget.add_argument("--components", type=int, default=5, help="components for plain-mc")

    p = _Parser(prog="mcboost-bench", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scaling", parents=[common, budget], help="runtime versus size")
    s.add_argument("--sizes", type=_int_list, default=list(DESK_SIZES))
    s.add_argument("--full-sizes", action="store_true", help=f"use sizes {FULL_SIZES}")
    s.add_argument("--methods", type=_method_list, default=list(METHODS))
    s.add_argument("--repeats", type=int, default=3)

    c = sub.add_parser("convergence", parents=[common], help="error versus number of walks")
    c.add_argument("--sizes", type=_int_list, default=[1000], help="problem size (first value used)")
    c.add_argument("--walks", type=_int_list, default=list(WALK_GRID), help="walk grid")
    c.add_argument("--estimator", choices=(FORWARD, ADJOINT), default=FORWARD)

    v = sub.add_parser("solve", parents=[common, budget], help="solve a Matrix Market system")
    v.add_argument("matrix", type=Path)
    v.add_argument("rhs", type=Path)
    v.add_argument("--methods", default="exact-seq-mc", help="one of: direct, " + ", ".join(METHODS))

    f = sub.add_parser("fredholm", parents=[common], help="Fredholm point estimate")
    f.add_argument("--kernel", default="constant", choices=sorted(fh.KERNELS))
    f.add_argument("--param", type=float, action="append", default=[], help="kernel parameter (repeatable)")
    f.add_argument("--x0", type=float, default=0.5)
    f.add_argument("--g", default="one", choices=sorted(_G_FUNCS))
    f.add_argument("--walks", type=int, default=100_000)
    f.add_argument("--survival", type=float, default=0.8)

    g = sub.add_parser("generate", parents=[common], help="export a generated problem")
    g.add_argument("--kind", choices=("diag-dominant", "halton-dense"), default="diag-dominant")
    g.add_argument("--sizes", type=_int_list, default=[100], help="problem size (first value used)")
    return p


def _method_cfg(args):
    for name in ("walks", "rounds", "sample_cols", "components", "threads"):
        if getattr(args, name) < 1:
            raise ConfigError(f"--{name.replace('_', '-')} must be >= 1")
    if not args.target_residual > 0:
        raise ConfigError("--target-residual must be > 0")
    return MethodConfig(walks=args.walks, rounds=args.rounds, sample_cols=args.sample_cols,
                        design=args.design, components=args.components,
                        target_residual=args.target_residual, threads=args.threads, seed=args.seed)


def _run(args):
    out = args.out
    if args.command == "scaling":
        sizes = list(FULL_SIZES) if args.full_sizes else args.sizes
        records = cmd_scaling(sizes, args.methods, args.seed, args.repeats, _method_cfg(args))
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "scaling.csv", SCALING_HEADER, [r.row() for r in records])
        for r in records:
            print(f"{r.method:>15} m={r.m:<5} {r.runtime_seconds:10.5f}s  residual {r.relative_residual:.3e}")
        return
    if args.command == "convergence":
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        m = args.sizes[0]
        records = cmd_convergence(m, args.walks, args.seed, args.threads, args.estimator)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "convergence.csv", CONVERGENCE_HEADER,
                   [[m, r.n_walks, args.seed, repr(r.l2_error), repr(r.runtime_seconds)] for r in records])
        _write_csv(out / "convergence_reference.csv", ("n_walks", "reference_error"),
                   [[n, repr(e)] for n, e in reference_curve(records)])
        for r in records:
            print(f"M={r.n_walks:<6} error {r.l2_error:.4f}  {r.runtime_seconds:.3f}s")
        return
    if args.command == "solve":
        method = args.methods
        if method not in METHODS and method != "direct":
            raise ConfigError(f"unknown method {method!r}")
        x, lines = cmd_solve(args.matrix, args.rhs, method, _method_cfg(args))
        out.mkdir(parents=True, exist_ok=True)
        write_vector_csv(out / "solution.csv", x, "x")
        (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print("\n".join(lines))
        return
    if args.command == "fredholm":
        if args.walks < 1 or args.threads < 1:
            raise ConfigError("--walks and --threads must be >= 1")
        if not 0 < args.survival < 1:
            raise ConfigError("--survival must lie in (0, 1)")
        row = cmd_fredholm(args.kernel, args.param, args.x0, args.walks, args.seed, args.g,
                           args.survival, args.threads)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "fredholm.csv", list(row), [[_fmt(v) for v in row.values()]])
        for k, v in row.items():
            print(f"{k}: {v}")
        return
    if args.command == "generate":
        for path in cmd_generate(args.kind, args.sizes[0], args.seed, out):
            print(path)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except McBoostError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
