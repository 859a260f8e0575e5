"""Weighted least squares, IRLS and the EM M-step linear systems.

Every square system here is symmetric positive definite and is handed to
one of three inner solvers:

* ``"direct"``: dense Gaussian elimination (:func:`mcboost.core.direct_solve`);
* an :class:`~mcboost.baselines.IterSolveConfig`: Gauss-Seidel;
* a :class:`~mcboost.boost.BoostConfig`: Monte Carlo boosting on the Jacobi
  fixed-point form of the system.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, List

import numpy as np

from .baselines import IterSolveConfig, gauss_seidel_solve
from .boost import BoostConfig, boost_solve
from .core import LinearSystem, as_matrix, as_vector, build_fixed_point, direct_solve, to_dense
from .errors import (DimensionError, IrlsError, McBoostError, NotPositiveDefiniteError,
                     SingularError)

DIRECT = "direct"


def solve_spd(matrix, rhs, inner=DIRECT):
    """Solve a symmetric positive definite system with the chosen inner solver."""
    if isinstance(inner, str):
        if inner != DIRECT:
            raise ValueError(f"unknown inner solver {inner!r}")
        return direct_solve(matrix, rhs)
    system = LinearSystem(matrix, rhs)
    if isinstance(inner, IterSolveConfig):
        return gauss_seidel_solve(system, inner).x
    if isinstance(inner, BoostConfig):
        return boost_solve(build_fixed_point(system), inner).x
    raise TypeError(f"unsupported inner solver {type(inner).__name__}")


@dataclass(frozen=True, eq=False)
class WlsProblem:
    """Minimise ``(f - L x)^T diag(w) (f - L x)`` over ``x``.

    ``L`` is Q x N with ``Q >= N`` and full column rank; the square case is
    accepted as the degenerate exactly-determined problem.
    """

    design: np.ndarray
    obs: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        lmat = np.asarray(to_dense(as_matrix(self.design, "L")))
        f = as_vector(self.obs, "f")
        w = as_vector(self.weights, "weights")
        q, n = lmat.shape
        if q < n:
            raise DimensionError("design must have at least as many rows as columns", f"Q >= {n}", q)
        if f.shape[0] != q or w.shape[0] != q:
            raise DimensionError("len(obs), len(weights)", q, (f.shape[0], w.shape[0]))
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if q * n <= 1_000_000:
            s = np.linalg.svd(lmat, compute_uv=False)
            if s[-1] <= 1e-10 * s[0]:
                raise SingularError(f"design is rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.3g})")
        object.__setattr__(self, "design", lmat)
        object.__setattr__(self, "obs", f)
        object.__setattr__(self, "weights", w)

    def residual(self, x):
        return self.obs - self.design @ x

    def objective(self, x):
        r = self.residual(x)
        return float(self.weights @ (r * r))


def normal_equations(p):
    """``(L^T W L, L^T W f)``."""
    lw = p.design * p.weights[:, None]
    return p.design.T @ lw, lw.T @ p.obs


def wls_solve(p, inner=DIRECT):
    """Weighted least-squares solution through the explicit normal equations."""
    mat, rhs = normal_equations(p)
    return solve_spd(mat, rhs, inner)


@dataclass(frozen=True)
class IrlsConfig:
    weight_update: Callable[[np.ndarray], np.ndarray]
    max_outer: int = 50
    outer_tol: float = 1e-8
    inner: object = DIRECT
    weight_floor: float = 1e-8
    weight_cap: float = 1e8

    def __post_init__(self):
        if not self.weight_floor > 0:
            raise ValueError("weight_floor must be > 0")
        if self.weight_cap < self.weight_floor:
            raise ValueError("weight_cap must be >= weight_floor")


@dataclass
class IrlsStep:
    x: np.ndarray
    weights: np.ndarray
    objective: float


@dataclass
class IrlsResult:
    x: np.ndarray
    converged: bool
    trace: List[IrlsStep] = field(repr=False)

    @property
    def iterations(self):
        return len(self.trace)


def l1_weights(floor=1e-8):
    """Weight update ``1 / max(|r|, floor)`` (least absolute deviations)."""
    def update(r):
        return 1.0 / np.maximum(np.abs(r), floor)
    return update


def irls_solve(p, cfg):
    """Alternate weighted solves and weight updates until ``x`` settles.

    Stops when the relative change in ``x`` is at most ``cfg.outer_tol`` or
    when the clamped weights come back unchanged (the next solve would
    repeat itself).
    """
    w = np.clip(p.weights, cfg.weight_floor, cfg.weight_cap)
    trace = []
    x_prev = None
    for it in range(cfg.max_outer):
        current = replace(p, weights=w)
        try:
            x = wls_solve(current, cfg.inner)
        except McBoostError as exc:
            raise IrlsError(it, exc) from exc
        trace.append(IrlsStep(x, w, current.objective(x)))
        if x_prev is not None and np.linalg.norm(x - x_prev) <= cfg.outer_tol * max(np.linalg.norm(x), 1e-300):
            return IrlsResult(x, True, trace)
        w_new = np.clip(np.asarray(cfg.weight_update(current.residual(x)), dtype=np.float64),
                        cfg.weight_floor, cfg.weight_cap)
        if np.array_equal(w_new, w):
            return IrlsResult(x, True, trace)
        w, x_prev = w_new, x
    return IrlsResult(x, False, trace)


@dataclass(frozen=True, eq=False)
class MStepProblem:
    """``(tau^-2 diag(lambda_hat) + X^T diag(omega_hat) X) beta = rhs``."""

    x_design: np.ndarray
    lambda_hat: np.ndarray
    omega_hat: np.ndarray
    tau: float
    rhs: np.ndarray

    def __post_init__(self):
        x = np.asarray(to_dense(as_matrix(self.x_design, "X")))
        lam = as_vector(self.lambda_hat, "lambda_hat")
        om = as_vector(self.omega_hat, "omega_hat")
        rhs = as_vector(self.rhs, "rhs")
        n, k = x.shape
        if lam.shape[0] != k or rhs.shape[0] != k:
            raise DimensionError("len(lambda_hat), len(rhs)", k, (lam.shape[0], rhs.shape[0]))
        if om.shape[0] != n:
            raise DimensionError("len(omega_hat)", n, om.shape[0])
        if np.any(lam < 0) or np.any(om < 0):
            raise ValueError("lambda_hat and omega_hat must be nonnegative")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        for name, v in (("x_design", x), ("lambda_hat", lam), ("omega_hat", om), ("rhs", rhs)):
            object.__setattr__(self, name, v)

    def matrix(self):
        return np.diag(self.lambda_hat / self.tau ** 2) + self.x_design.T @ (self.x_design * self.omega_hat[:, None])


def _check_spd(mat):
    d = np.diag(mat)
    off = np.abs(mat).sum(axis=1) - np.abs(d)
    if np.all(d > 0) and np.all(d > off) and np.allclose(mat, mat.T):
        return
    if not np.allclose(mat, mat.T, rtol=1e-10, atol=1e-12 * np.abs(mat).max()):
        raise NotPositiveDefiniteError("M-step matrix is not symmetric")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("M-step matrix is not positive definite") from exc


def mstep_solve(p, inner=DIRECT):
    """Solve the M-step system for ``beta``."""
    mat = p.matrix()
    _check_spd(mat)
    return solve_spd(mat, p.rhs, inner)


@dataclass(frozen=True, eq=False)
class StableMStepProblem:
    """Equality-constrained M-step.

    Rows in ``x_s`` (the support set, whose weights diverged) become hard
    constraints ``x_s beta = rhs_constraint``; the remaining rows enter the
    penalised block ``B = prior_block + x_minus_s^T diag(lambda_minus_s_inv) x_minus_s``.
    """

    x_minus_s: np.ndarray
    x_s: np.ndarray
    lambda_minus_s_inv: np.ndarray
    prior_block: np.ndarray
    rhs_top: np.ndarray
    rhs_constraint: np.ndarray = None

    def __post_init__(self):
        xm = np.atleast_2d(np.asarray(self.x_minus_s, dtype=np.float64))
        k = np.asarray(self.prior_block).shape[0]
        xs = np.asarray(self.x_s, dtype=np.float64).reshape(-1, k)
        lam = as_vector(self.lambda_minus_s_inv, "lambda_minus_s_inv")
        prior = np.asarray(to_dense(as_matrix(self.prior_block, "prior_block")))
        top = as_vector(self.rhs_top, "rhs_top")
        con = np.ones(xs.shape[0]) if self.rhs_constraint is None else as_vector(self.rhs_constraint)
        if prior.shape != (k, k) or xm.shape[1] != k or top.shape[0] != k:
            raise DimensionError("block sizes", k, (prior.shape, xm.shape, top.shape))
        if lam.shape[0] != xm.shape[0]:
            raise DimensionError("len(lambda_minus_s_inv)", xm.shape[0], lam.shape[0])
        if con.shape[0] != xs.shape[0]:
            raise DimensionError("len(rhs_constraint)", xs.shape[0], con.shape[0])
        for name, v in (("x_minus_s", xm), ("x_s", xs), ("lambda_minus_s_inv", lam),
                        ("prior_block", prior), ("rhs_top", top), ("rhs_constraint", con)):
            object.__setattr__(self, name, v)

    @classmethod
    def from_rows(cls, x_minus_s, x_s, lambda_minus_s_inv, prior_block):
        """Build with ``rhs_top = x_minus_s^T (1 + lambda_minus_s_inv)`` and unit constraints."""
        xm = np.atleast_2d(np.asarray(x_minus_s, dtype=np.float64))
        lam = np.asarray(lambda_minus_s_inv, dtype=np.float64)
        return cls(xm, x_s, lam, prior_block, xm.T @ (1.0 + lam))

    @classmethod
    def from_weights(cls, x_design, lambda_inv, prior_block, cap=1e8):
        """Split rows by weight: rows with ``lambda_inv > cap`` (or infinite) become constraints."""
        x = np.atleast_2d(np.asarray(x_design, dtype=np.float64))
        lam = np.asarray(lambda_inv, dtype=np.float64)
        if lam.shape != (x.shape[0],):
            raise DimensionError("len(lambda_inv)", x.shape[0], lam.shape)
        if np.any(np.isnan(lam)) or np.any(lam < 0):
            raise ValueError("lambda_inv must be nonnegative")
        support = ~(lam <= cap)
        return cls.from_rows(x[~support], x[support], lam[~support], prior_block)

    def b_matrix(self):
        return self.prior_block + self.x_minus_s.T @ (self.x_minus_s * self.lambda_minus_s_inv[:, None])

    def kkt_matrix(self):
        xs = self.x_s
        c = xs.shape[0]
        return np.block([[self.b_matrix(), xs.T], [xs, np.zeros((c, c))]])


def partitioned_inverse(b, x_s):
    """Closed-form inverse of ``[[B, X_s^T], [X_s, 0]]``.

    With ``F = -(X_s B^-1 X_s^T)^-1`` the blocks are
    ``B^-1 (I + X_s^T F X_s B^-1)``, ``-B^-1 X_s^T F``, ``-F X_s B^-1`` and ``F``.
    """
    k = b.shape[0]
    b_inv = direct_solve(b, np.eye(k))
    f = _schur_f(x_s, b_inv @ x_s.T)
    top_right = -b_inv @ x_s.T @ f
    top_left = b_inv @ (np.eye(k) + x_s.T @ f @ x_s @ b_inv)
    return np.block([[top_left, top_right], [-f @ x_s @ b_inv, f]])


def _schur_f(x_s, b_inv_xst):
    s = x_s @ b_inv_xst
    try:
        return -direct_solve(s, np.eye(s.shape[0]))
    except SingularError as exc:
        raise SingularError(
            "constraint block X_s B^-1 X_s^T is singular; X_s must have full row rank") from exc


def stable_mstep_solve(p):
    """Solve the constrained M-step, returning ``(beta, psi)``.

    ``psi`` are the Lagrange multipliers of the constraint rows.
    """
    b = p.b_matrix()
    r1, r2, xs = p.rhs_top, p.rhs_constraint, p.x_s
    try:
        b_inv_r1 = direct_solve(b, r1)
    except SingularError as exc:
        raise NotPositiveDefiniteError("penalised block B is singular") from exc
    if xs.shape[0] == 0:
        return b_inv_r1, np.zeros(0)
    b_inv_xst = direct_solve(b, xs.T)
    f = _schur_f(xs, b_inv_xst)
    psi = f @ (r2 - xs @ b_inv_r1)
    beta = b_inv_r1 - b_inv_xst @ psi
    return beta, psi
