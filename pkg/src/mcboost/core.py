"""Matrix plumbing and the fixed-point form ``x = a + H x``.

Matrices are plain ``numpy.ndarray`` (dense) or ``scipy.sparse`` CSR
arrays.  Every solver in the package consumes a :class:`FixedPointSystem`
or a :class:`LinearSystem`; both validate their inputs once, at
construction, and are treated as immutable afterwards.
"""
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, NonFiniteError, SingularError, ZeroDiagonalError

Matrix = Union[np.ndarray, sp.csr_array, sp.csr_matrix]

#: fixed-point systems whose estimated radius of |H| exceeds this get a warning
CONVERGENCE_GATE = 0.999


class ConvergenceWarning(UserWarning):
    pass


def storage_kind(m):
    return "sparse" if sp.issparse(m) else "dense"


def as_matrix(m, name="matrix"):
    """Validate ``m`` and return it as a float dense array or canonical CSR.

    Sparse input is converted to CSR with duplicates summed and column
    indices sorted within each row.  NaN/Inf entries are rejected.
    """
    if sp.issparse(m):
        out = sp.csr_array(m, dtype=np.float64, copy=True)
        out.sum_duplicates()
        out.sort_indices()
        values = out.data
    else:
        out = np.array(m, dtype=np.float64, copy=True)
        if out.ndim != 2:
            raise DimensionError(f"{name} rank", 2, out.ndim)
        out.flags.writeable = False
        values = out
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return out


def as_vector(v, name="vector"):
    out = np.array(v, dtype=np.float64, copy=True)
    if out.ndim != 1:
        raise DimensionError(f"{name} rank", 1, out.ndim)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{name} has non-finite entries")
    out.flags.writeable = False
    return out


def to_dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def abs_matrix(m):
    return abs(m) if sp.issparse(m) else np.abs(m)


def matvec(m, v):
    """Return ``m @ v`` after checking that the inner dimensions agree."""
    v = np.asarray(v, dtype=np.float64)
    if m.shape[1] != v.shape[0]:
        raise DimensionError("matvec", f"vector of length {m.shape[1]}",
                             f"length {v.shape[0]} (matrix is {m.shape[0]}x{m.shape[1]})")
    return np.asarray(m @ v, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """``A x = b`` with ``A`` square."""

    matrix: Matrix
    rhs: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.matrix, "A")
        b = as_vector(self.rhs, "b")
        if a.shape[0] != a.shape[1]:
            raise DimensionError("A must be square", "m x m", a.shape)
        if b.shape[0] != a.shape[0]:
            raise DimensionError("len(b)", a.shape[0], b.shape[0])
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "rhs", b)

    @property
    def size(self):
        return self.rhs.shape[0]

    def diagonal(self):
        return np.asarray(self.matrix.diagonal(), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class FixedPointSystem:
    """The fixed-point form ``x = a + H x`` of a linear system.

    ``rho`` is an optional estimate of the spectral radius of ``|H|``.
    """

    h_matrix: Matrix
    a_vec: np.ndarray
    rho: Optional[float] = None

    def __post_init__(self):
        h = as_matrix(self.h_matrix, "H")
        a = as_vector(self.a_vec, "a")
        if h.shape[0] != h.shape[1]:
            raise DimensionError("H must be square", "m x m", h.shape)
        if a.shape[0] != h.shape[0]:
            raise DimensionError("len(a)", h.shape[0], a.shape[0])
        if self.rho is not None and not self.rho >= 0:
            raise ValueError(f"rho estimate must be >= 0, got {self.rho}")
        object.__setattr__(self, "h_matrix", h)
        object.__setattr__(self, "a_vec", a)

    @property
    def size(self):
        return self.a_vec.shape[0]

    def with_rhs(self, a_vec):
        """Same operator, new right-hand side.  ``H`` is shared, not copied."""
        new = object.__new__(FixedPointSystem)
        object.__setattr__(new, "h_matrix", self.h_matrix)
        object.__setattr__(new, "a_vec", as_vector(a_vec, "a"))
        object.__setattr__(new, "rho", self.rho)
        if new.a_vec.shape[0] != self.size:
            raise DimensionError("len(a)", self.size, new.a_vec.shape[0])
        return new

    def with_rho(self, rho):
        new = self.with_rhs(self.a_vec)
        object.__setattr__(new, "rho", float(rho))
        return new


def build_fixed_point(system, preconditioner="jacobi"):
    """Rewrite ``A x = b`` as ``x = a + H x`` with ``H = I - G A``, ``a = G b``.

    ``preconditioner`` is ``"jacobi"`` (``G = diag(A)^-1``, which zeroes the
    diagonal of ``H``) or an explicit nonsingular m x m matrix ``G``.
    """
    a_mat, b = system.matrix, system.rhs
    m = system.size
    if isinstance(preconditioner, str):
        if preconditioner.lower() != "jacobi":
            raise ValueError(f"unknown preconditioner {preconditioner!r}")
        d = system.diagonal()
        zero = np.flatnonzero(d == 0)
        if zero.size:
            raise ZeroDiagonalError(int(zero[0]))
        inv_d = 1.0 / d
        if sp.issparse(a_mat):
            h = sp.eye_array(m, format="csr") - sp.diags_array(inv_d) @ a_mat
            h = sp.csr_array(h)
            h.setdiag(0.0)
            h.eliminate_zeros()
        else:
            h = -a_mat * inv_d[:, None]
            np.fill_diagonal(h, 0.0)
        return FixedPointSystem(h, inv_d * b)
    g = as_matrix(preconditioner, "G")
    if g.shape != (m, m):
        raise DimensionError("G shape", (m, m), g.shape)
    ga = g @ a_mat
    if sp.issparse(ga):
        h = sp.csr_array(sp.eye_array(m) - ga)
    else:
        h = np.eye(m) - ga
    return FixedPointSystem(h, matvec(g, b))


class SpectralEstimate(NamedTuple):
    rho: float
    converged: bool
    iterations: int


def estimate_spectral_radius(m, iters=1000, tol=1e-12):
    """Power iteration for the spectral radius of ``|m|`` (entrywise abs).

    The iteration runs on ``|m| + I`` so that periodic nonnegative matrices
    still converge; the Perron root shifts by exactly one.
    """
    if m.shape[0] != m.shape[1]:
        raise DimensionError("spectral radius needs a square matrix", "m x m", m.shape)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    am = abs_matrix(m)
    n = m.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    prev = None
    for it in range(1, iters + 1):
        w = am @ v + v
        norm = np.linalg.norm(w)
        est = norm - 1.0
        if est <= 0.0:
            return SpectralEstimate(0.0, True, it)
        v = w / norm
        if prev is not None and abs(est - prev) < tol:
            return SpectralEstimate(max(est, 0.0), True, it)
        prev = est
    return SpectralEstimate(max(est, 0.0), False, iters)


def check_convergence(fp, gate=CONVERGENCE_GATE):
    """Return ``fp`` with a radius estimate attached, warning above ``gate``."""
    if fp.rho is None:
        fp = fp.with_rho(estimate_spectral_radius(fp.h_matrix).rho)
    if fp.rho >= gate:
        warnings.warn(
            f"estimated spectral radius of |H| is {fp.rho:.4f} (>= {gate}); "
            "Neumann series and random walks may converge slowly or not at all",
            ConvergenceWarning, stacklevel=2)
    return fp


def neumann_partial_sum(fp, n_terms):
    """``X_n = sum_{k=0}^{n} H^k a`` via ``X_0 = a``, ``X_k = a + H X_{k-1}``."""
    if n_terms < 0:
        raise ValueError("n_terms must be >= 0")
    a = np.array(fp.a_vec)
    x = a.copy()
    for _ in range(n_terms):
        x = a + fp.h_matrix @ x
    return x


def residual(system, x):
    """``b - A x``."""
    return system.rhs - matvec(system.matrix, x)


def residual_fp(fp, x):
    """``a + H x - x``: the right-hand side of the correction system."""
    x = np.asarray(x, dtype=np.float64)
    return fp.a_vec + matvec(fp.h_matrix, x) - x


def direct_solve(a, b, pivot_tol=1e-12):
    """Dense Gaussian elimination with partial pivoting.

    Used as the reference solver in tests and as the ``direct`` inner
    solver.  Raises :class:`SingularError` when a pivot falls below
    ``pivot_tol`` times the largest entry of ``a``.
    """
    a = np.array(to_dense(a), dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    vector_rhs = b.ndim == 1
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionError("direct_solve needs a square matrix", "n x n", a.shape)
    if b.shape[0] != n:
        raise DimensionError("len(b)", n, b.shape[0])
    b = b.reshape(n, -1)
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        raise SingularError("matrix is zero")
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= pivot_tol * scale:
            raise SingularError(f"pivot {k} is {abs(a[p, k]):.3g}; matrix is singular to working precision")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        f = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(f, a[k, k:])
        b[k + 1:] -= np.outer(f, b[k])
    x = np.empty_like(b)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x[:, 0] if vector_rhs else x
