"""Jacobi and Gauss-Seidel iterations, the deterministic baselines."""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular

from .errors import DivergenceError, ZeroDiagonalError

#: residual growth over the initial residual that counts as divergence
DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class IterSolveConfig:
    max_iters: int = 10_000
    tol: float = 1e-8
    record_history: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


@dataclass
class IterSolveResult:
    x: np.ndarray
    iters_used: int
    final_relative_residual: float
    converged: bool
    residual_history: Optional[List[float]] = field(default=None, repr=False)


def _diagonal(system):
    d = system.diagonal()
    zero = np.flatnonzero(d == 0)
    if zero.size:
        raise ZeroDiagonalError(int(zero[0]))
    return d


def gauss_seidel_sweep(a, b, x, diag):
    """One in-place forward sweep ``x_i <- x_i + (b_i - A_i x) / A_ii``, row by row."""
    if sp.issparse(a):
        indptr, indices, data = a.indptr, a.indices, a.data
        for i in range(x.shape[0]):
            lo, hi = indptr[i], indptr[i + 1]
            s = data[lo:hi] @ x[indices[lo:hi]]
            x[i] += (b[i] - s) / diag[i]
    else:
        for i in range(x.shape[0]):
            x[i] += (b[i] - a[i] @ x) / diag[i]
    return x


def _iterate(name, system, cfg, make_update):
    a, b = system.matrix, system.rhs
    d = _diagonal(system)
    update = make_update(a, d)
    x = np.zeros(system.size)
    bnorm = np.linalg.norm(b)
    history = [] if cfg.record_history else None
    if bnorm == 0:
        return IterSolveResult(x, 0, 0.0, True, history)
    r0 = bnorm
    rel = 1.0
    it = 0
    while it < cfg.max_iters:
        update(b, x)
        it += 1
        rnorm = np.linalg.norm(b - a @ x)
        rel = rnorm / bnorm
        if history is not None:
            history.append(rel)
        if rel <= cfg.tol:
            return IterSolveResult(x, it, rel, True, history)
        if not np.isfinite(rnorm) or rnorm > DIVERGENCE_FACTOR * r0:
            raise DivergenceError(name, it, rnorm / r0)
    return IterSolveResult(x, it, rel, False, history)


def _jacobi(a, d):
    def update(b, x):
        x += (b - a @ x) / d
    return update


def _gauss_seidel(a, d):
    if sp.issparse(a):
        return lambda b, x: gauss_seidel_sweep(a, b, x, d)
    # a dense forward sweep is the triangular solve (D + L) x_new = b - U x_old
    lower, upper = np.tril(a), np.triu(a, 1)

    def update(b, x):
        x[:] = solve_triangular(lower, b - upper @ x, lower=True, check_finite=False)
    return update


def jacobi_solve(system, cfg=IterSolveConfig()):
    """Jacobi iteration ``x <- D^-1 (b - (A - D) x)`` from ``x = 0``."""
    return _iterate("jacobi", system, cfg, _jacobi)


def gauss_seidel_solve(system, cfg=IterSolveConfig()):
    """Forward Gauss-Seidel sweeps from ``x = 0``.

    Dense sweeps are done as one triangular solve each; sparse ones row by row.
    """
    return _iterate("gauss-seidel", system, cfg, _gauss_seidel)
