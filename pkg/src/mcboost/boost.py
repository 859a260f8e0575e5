"""Sequential residual correction ("Monte Carlo boosting").

With ``Y`` the current estimate of ``x = a + H x``, the error ``Z = x - Y``
solves ``Z = D + H Z`` where ``D = a + H Y - Y``.  Each round estimates ``Z``
with adjoint walks on the *same* operator and sets ``Y <- Y + Z_hat``, so the
residual shrinks geometrically as long as each correction is better than
no correction.
"""
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Union

import numpy as np
import scipy.sparse as sp

from . import rng
from .baselines import gauss_seidel_sweep
from .core import check_convergence, residual_fp, to_dense
from .errors import SupportError
from .walk import ADJOINT, WalkConfig, adjoint_estimate, kernel_from_operator

EXACT = "exact"

_TAG_ROUND = 11
_TAG_SAMPLE = 12


PPS = "pps"
GREEDY = "greedy"


@dataclass(frozen=True)
class Sampled:
    """Correct only ``sample_cols`` coordinates of ``D`` per round.

    ``design="pps"`` draws them with probability proportional to ``|D_i|``
    and reweights (unbiased, but the reweighting noise grows like
    ``sqrt(m / sample_cols)``); ``design="greedy"`` takes the largest
    ``|D_i|`` unweighted, which is biased per round but contracts.
    """

    sample_cols: int
    design: str = PPS

    def __post_init__(self):
        if self.sample_cols < 1:
            raise ValueError("sample_cols must be >= 1")
        if self.design not in (PPS, GREEDY):
            raise ValueError(f"unknown sampling design {self.design!r}")


@dataclass(frozen=True)
class BoostConfig:
    inner: WalkConfig = field(
        default_factory=lambda: WalkConfig(n_walks=5000, exact_initial_term=True))
    rounds: int = 20
    target_residual: float = 1e-8
    variant: Union[str, Sampled] = EXACT
    #: walks for the round-0 estimate; None means ``inner.n_walks``, 0 starts from zero
    initial_walks: Optional[int] = None
    deterministic_polish: bool = False
    polish_sweeps: int = 1

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not self.target_residual > 0:
            raise ValueError("target_residual must be > 0")
        if not (self.variant == EXACT or isinstance(self.variant, Sampled)):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class BoostResult:
    x: np.ndarray
    rounds_used: int
    residual_history: List[float]
    converged: bool
    kappa_estimate: Optional[float]
    final_residual: float
    total_walks: int = 0


def estimate_kappa(residual_history):
    """Geometric-mean contraction factor of a residual history.

    Round 0 is skipped; the remaining ratios ``r[k+1] / r[k]`` are averaged
    geometrically, i.e. ``(r[-1] / r[1]) ** (1 / (len(r) - 2))``.
    """
    r = np.asarray(residual_history, dtype=np.float64)
    if r.size < 3:
        raise ValueError(f"need at least 3 residuals, got {r.size}")
    if np.any(r <= 0):
        raise ValueError("residuals must be positive")
    tail = r[1:]
    return float(math.exp((math.log(tail[-1]) - math.log(tail[0])) / (tail.size - 1)))


def pps_inclusion_probabilities(weights, n):
    """Inclusion probabilities proportional to ``weights`` for ``n`` draws.

    Units whose share would exceed 1 become certainties and the remaining
    draws are redistributed over the rest.
    """
    w = np.abs(np.asarray(weights, dtype=np.float64))
    pi = np.zeros_like(w)
    pos = w > 0
    if n >= pos.sum():
        pi[pos] = 1.0
        return pi
    certain = np.zeros(w.shape, dtype=bool)
    while True:
        left = n - certain.sum()
        rest = pos & ~certain
        pi[rest] = left * w[rest] / w[rest].sum()
        over = rest & (pi >= 1.0)
        if not over.any():
            break
        certain |= over
    pi[certain] = 1.0
    return pi


def systematic_sample(pi, u):
    """Indices picked by systematic sampling with start ``u`` in [0, 1).

    Certainties (``pi == 1``) are always taken; the others are laid out in
    index order on a line and every unit whose segment holds one of the
    points ``u, u + 1, ...`` is taken, so unit ``i`` is picked with
    probability ``pi[i]``.
    """
    certain = np.flatnonzero(pi >= 1.0)
    rest = np.flatnonzero((pi > 0) & (pi < 1.0))
    if rest.size:
        c = np.cumsum(pi[rest])
        c[-1] = np.round(c[-1])  # the non-certain draws sum to an integer
        # unit i is hit when some u + k lies in [c[i-1], c[i])
        hits = np.ceil(c - u) - np.ceil(np.concatenate(([0.0], c[:-1])) - u)
        picked = rest[hits > 0]
    else:
        picked = rest
    return np.sort(np.concatenate((certain, picked)))


def sample_rhs(d, sample_cols, u):
    """Horvitz-Thompson sparsification of ``d``: unbiased, at most ``sample_cols`` nonzeros."""
    pi = pps_inclusion_probabilities(d, sample_cols)
    idx = systematic_sample(pi, u)
    out = np.zeros_like(np.asarray(d, dtype=np.float64))
    out[idx] = d[idx] / pi[idx]
    return out


def _round_seed(seed, k):
    return int(rng.stream_key(seed, _TAG_ROUND, k))


def greedy_rhs(d, sample_cols):
    """Keep the ``sample_cols`` largest-magnitude entries of ``d``."""
    d = np.asarray(d, dtype=np.float64)
    out = np.zeros_like(d)
    if sample_cols >= d.shape[0]:
        out[:] = d
        return out
    idx = np.argpartition(np.abs(d), -sample_cols)[-sample_cols:]
    out[idx] = d[idx]
    return out


def sampled_correction(fp_correction, sample_cols, cfg=WalkConfig(), kernel=None, design=PPS):
    """Estimate ``Z = D + H Z`` from a subsample of ``D = fp_correction.a_vec``.

    With the default design, ``sample_cols`` coordinates are drawn with
    probability proportional to ``|D_i|`` without replacement and reweighted
    by their inclusion probabilities; the sparsified system is then solved
    with adjoint walks.
    """
    d = np.asarray(fp_correction.a_vec)
    m = d.shape[0]
    if not 1 <= sample_cols <= m:
        raise ValueError(f"sample_cols must lie in [1, {m}]")
    if not np.any(d):
        return np.zeros(m)
    if design == GREEDY:
        d_tilde = greedy_rhs(d, sample_cols)
    else:
        u = rng.uniforms(rng.stream_key(cfg.seed, _TAG_SAMPLE), [0], 0, 0)[0]
        d_tilde = sample_rhs(d, sample_cols, u)
    sub = fp_correction.with_rhs(d_tilde)
    if kernel is None:
        kernel = kernel_from_operator(sub.h_matrix, d_tilde, ADJOINT, cfg.termination, sub.rho)
    else:
        kernel = kernel.with_start(d_tilde)
    return adjoint_estimate(sub, replace(cfg, kernel=kernel)).estimate


class _ColumnUpdater:
    """Computes ``H z`` for sparse ``z`` in ``O(m * nnz(z))``."""

    def __init__(self, h):
        if sp.issparse(h):
            self._csc = sp.csc_array(h)
            self._ht = None
        else:
            self._ht = np.ascontiguousarray(np.asarray(h).T)

    def __call__(self, z):
        s = np.flatnonzero(z)
        if self._ht is not None:
            return z[s] @ self._ht[s]
        return self._csc[:, s] @ z[s]


def boost_solve(fp, cfg=BoostConfig(), correction=None):
    """Solve ``x = a + H x`` by repeated Monte Carlo residual correction.

    Round 0 estimates ``x`` directly (or starts from zero); every later round
    computes ``D`` exactly, estimates the correction and adds it.  Stops once
    ``||D|| / ||a|| <= cfg.target_residual`` or after ``cfg.rounds`` rounds.

    A prebuilt adjoint kernel on ``fp.h_matrix`` may be passed as
    ``cfg.inner.kernel``; it is restarted from each round's right-hand side.

    ``correction``, if given, replaces the walk estimator: it is called with
    the correction system (same ``H``, right-hand side ``D``) and must return
    ``Z``.  Passing an exact solver makes the loop finish in one round.
    """
    fp = check_convergence(fp)
    h = fp.h_matrix
    a = np.asarray(fp.a_vec)
    m = fp.size
    anorm = np.linalg.norm(a)
    if anorm == 0:
        return BoostResult(np.zeros(m), 1, [0.0], True, None, 0.0)

    sampled = isinstance(cfg.variant, Sampled)
    inner = cfg.inner
    kernel = None
    if correction is None:
        kernel = inner.kernel
        if kernel is None:
            kernel = kernel_from_operator(h, a, ADJOINT, inner.termination, fp.rho)
        elif kernel.mode != ADJOINT or kernel.transitions.source is not h:
            raise SupportError("inner.kernel must be an adjoint kernel built on fp.h_matrix")
    col_update = _ColumnUpdater(h) if sampled else None
    walks = 0

    def correct(rhs, k, n_walks):
        nonlocal walks
        if correction is not None:
            return np.array(correction(fp.with_rhs(rhs)), dtype=np.float64)
        if not np.any(rhs):
            return np.zeros(m)
        wc = replace(inner, seed=_round_seed(inner.seed, k), n_walks=n_walks)
        walks += n_walks
        if sampled:
            return sampled_correction(fp.with_rhs(rhs), min(cfg.variant.sample_cols, m), wc, kernel,
                                      cfg.variant.design)
        return adjoint_estimate(fp.with_rhs(rhs), replace(wc, kernel=kernel.with_start(rhs))).estimate

    n0 = inner.n_walks if cfg.initial_walks is None else cfg.initial_walks
    if n0 > 0:
        y = correct(a, 0, n0)
    else:
        y = np.zeros(m)
    d = residual_fp(fp, y)
    history = []
    converged = False
    for k in range(cfg.rounds):
        if k > 0:
            z = correct(d, k, inner.n_walks)
            y += z
            if sampled:
                d += col_update(z) - z
            else:
                d = a + h @ y - y
        r = float(np.linalg.norm(d) / anorm)
        history.append(r)
        if r <= cfg.target_residual:
            converged = True
            break

    if cfg.deterministic_polish:
        system = sp.eye_array(m, format="csr") - h if sp.issparse(h) else np.eye(m) - to_dense(h)
        diag = np.asarray(system.diagonal())
        for _ in range(cfg.polish_sweeps):
            gauss_seidel_sweep(system, a, y, diag)

    final = float(np.linalg.norm(residual_fp(fp, y)) / anorm)
    kappa = None
    positive = [v for v in history if v > 0]
    if len(positive) == len(history) and len(history) >= 3:
        kappa = estimate_kappa(history)
    return BoostResult(y, len(history), history, converged, kappa, final, walks)
