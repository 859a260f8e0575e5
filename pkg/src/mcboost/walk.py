"""Random-walk estimators for ``x = a + H x``.

Forward walks start from the query vector ``h`` and estimate ``<h, x>``;
adjoint walks start from the right-hand side ``a`` and deposit their
weight into every state they visit, which estimates all of ``x`` from one
set of walks.

All walks of one call run in lockstep as numpy arrays.  Random numbers come
from :mod:`mcboost.rng`, keyed by ``(seed, walk index, step)``, and walks
are reduced in fixed-size chunks in index order, so a report depends only
on the seed and the configuration, never on ``workers``.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from . import rng
from .core import abs_matrix, as_vector, estimate_spectral_radius
from .errors import DimensionError, SupportError

FORWARD = "forward"
ADJOINT = "adjoint"

#: walks per reduction chunk; fixed so that results never depend on threading
CHUNK = 32768

_TAG_FORWARD = 1
_TAG_ADJOINT = 2
_TAG_COMPONENTS = 3


@dataclass(frozen=True)
class FixedLength:
    """Every walk makes exactly ``length`` transitions (unless it hits a zero row)."""

    length: int

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be >= 0")


@dataclass(frozen=True)
class KillingProb:
    """Sub-stochastic transitions: state ``i`` absorbs the walk with mass ``kill[i]``."""

    kill: Union[float, np.ndarray] = 0.2


@dataclass(frozen=True)
class WeightCutoff:
    """Stop once ``|W| < eps * |W_0|`` or after ``hard_cap`` transitions.

    ``hard_cap=None`` resolves to ``10 * ceil(log(eps) / log(rho))`` where
    ``rho`` is the spectral radius of ``|H|``.
    """

    eps: float = 1e-6
    hard_cap: Optional[int] = None


Termination = Union[FixedLength, KillingProb, WeightCutoff]


@dataclass(frozen=True, eq=False)
class Transitions:
    """Transition table of a chain, stored row-compressed.

    ``probs[pos]`` is the probability of the move ``row -> indices[pos]``;
    ``ratio[pos]`` is the matching weight factor ``M[row, j] / P[row, j]``.
    ``cdf`` holds ``row + cumulative probability / row mass``; a move is the
    first position whose ``cdf`` exceeds ``row + u``.  ``guide[indptr[r] + k]``
    is that position for ``u = k / n_r`` (``n_r`` entries in row ``r``), so a
    lookup starts next to its answer and needs about one comparison instead
    of a binary search over the whole table.
    """

    source: object
    mode: str
    indptr: np.ndarray
    indices: np.ndarray
    probs: np.ndarray
    ratio: np.ndarray
    cdf: np.ndarray
    guide: np.ndarray
    kill: np.ndarray
    termination: Termination
    hard_cap: Optional[int]
    op_norm: float

    @property
    def size(self):
        return self.kill.shape[0]

    def matrix(self):
        m = self.size
        return sp.csr_array((self.probs, self.indices, self.indptr), shape=(m, m))

    def position(self, row, col):
        lo, hi = self.indptr[row], self.indptr[row + 1]
        k = lo + int(np.searchsorted(self.indices[lo:hi], col))
        if k == hi or self.indices[k] != col:
            return None
        return k

    def sample(self, states, u):
        lo = self.indptr[states]
        last = self.indptr[states + 1] - 1
        count = np.maximum(last - lo + 1, 1)
        k = np.minimum(np.floor(u * count), count - 1)
        k -= k / count > u
        pos = self.guide[lo + k.astype(np.int64)]
        target = states + u
        todo = np.flatnonzero((self.cdf[pos] <= target) & (pos < last))
        while todo.size:
            pos[todo] += 1
            todo = todo[(self.cdf[pos[todo]] <= target[todo]) & (pos[todo] < last[todo])]
        return pos


def _walk_operator(h_matrix, mode):
    if mode == FORWARD:
        m = h_matrix
    elif mode == ADJOINT:
        m = h_matrix.T
    else:
        raise ValueError(f"unknown mode {mode!r}")
    m = sp.csr_array(m, dtype=np.float64)
    m.eliminate_zeros()
    m.sort_indices()
    return m


def _resolve_cap(termination, h_matrix, rho):
    if not isinstance(termination, WeightCutoff):
        return None
    if termination.hard_cap is not None:
        return int(termination.hard_cap)
    if rho is None:
        rho = estimate_spectral_radius(h_matrix).rho
    if rho <= 0.0:
        return 1
    if rho >= 1.0:
        return None
    return max(1, 10 * math.ceil(math.log(termination.eps) / math.log(rho)))


def _build_transitions(h_matrix, mode, probs_csr, termination, rho=None):
    op = _walk_operator(h_matrix, mode)
    m = op.shape[0]
    p = sp.csr_array(probs_csr, dtype=np.float64)
    p.eliminate_zeros()
    p.sum_duplicates()
    p.sort_indices()
    if p.shape != op.shape:
        raise DimensionError("transition matrix shape", op.shape, p.shape)
    if p.data.size and (p.data.min() < 0):
        raise SupportError("transition probabilities must be nonnegative")
    row_mass = np.asarray(p.sum(axis=1)).ravel()
    if np.any(row_mass > 1 + 1e-12):
        raise SupportError(f"row {int(np.argmax(row_mass))} of P sums to {row_mass.max():.6g} > 1")
    same_pattern = (op.nnz == p.nnz and np.array_equal(op.indptr, p.indptr)
                    and np.array_equal(op.indices, p.indices))
    if not same_pattern:
        # support condition: M[i, j] != 0  =>  P[i, j] != 0
        uncovered = (op != 0).astype(np.int8) - (op != 0).multiply(p != 0).astype(np.int8)
        uncovered.eliminate_zeros()
        if uncovered.nnz:
            i, j = uncovered.nonzero()
            raise SupportError(
                f"operator entry ({i[0]}, {j[0]}) is nonzero but its transition probability is 0")
    kill = np.clip(1.0 - row_mass, 0.0, 1.0)
    if isinstance(termination, KillingProb):
        need = np.broadcast_to(np.asarray(termination.kill, dtype=np.float64), (m,))
        if np.any(kill < need - 1e-12):
            raise SupportError("kill mass below the requested minimum")
    counts = np.diff(p.indptr)
    rows = np.repeat(np.arange(m), counts)
    if same_pattern:
        m_vals = op.data
    elif p.nnz:
        m_vals = np.asarray(op[rows, p.indices]).ravel()
    else:
        m_vals = np.zeros(0)
    ratio = m_vals / p.data
    csum = np.cumsum(p.data)
    before = np.concatenate(([0.0], csum))[p.indptr[:-1]]
    mass = np.where(counts > 0, row_mass, 1.0)
    within = (csum - np.repeat(before, counts)) / np.repeat(mass, counts)
    within[p.indptr[1:][counts > 0] - 1] = 1.0
    cdf = rows + within
    k_in_row = np.arange(p.nnz) - np.repeat(p.indptr[:-1], counts)
    guide = np.searchsorted(cdf, rows + k_in_row / np.repeat(np.maximum(counts, 1), counts), side="right")
    guide = np.minimum(guide, np.repeat(p.indptr[1:] - 1, counts)).astype(np.int64)
    op_norm = float(np.max(np.asarray(abs(op).sum(axis=1)).ravel(), initial=0.0))
    return Transitions(
        source=h_matrix, mode=mode, indptr=p.indptr.astype(np.int64),
        indices=p.indices.astype(np.int64), probs=p.data, ratio=ratio, cdf=cdf, guide=guide,
        kill=kill, termination=termination,
        hard_cap=_resolve_cap(termination, h_matrix, rho), op_norm=op_norm)


def _proportional_probs(h_matrix, mode, termination):
    op = _walk_operator(h_matrix, mode)
    m = op.shape[0]
    a = abs(op)
    rs = np.asarray(a.sum(axis=1)).ravel()
    if isinstance(termination, KillingProb):
        kill = np.broadcast_to(np.asarray(termination.kill, dtype=np.float64), (m,))
        if np.any(kill <= 0) or np.any(kill > 1):
            raise ValueError("kill mass must lie in (0, 1]")
        mass = 1.0 - kill
    else:
        mass = np.ones(m)
    scale = np.divide(mass, rs, out=np.zeros(m), where=rs > 0)
    return sp.csr_array(sp.diags_array(scale) @ a)


def _initial_probs(v):
    v = np.asarray(v, dtype=np.float64)
    total = np.abs(v).sum()
    if total == 0:
        raise SupportError("start vector is all zero")
    return np.abs(v) / total


@dataclass(frozen=True, eq=False)
class ChainKernel:
    """Initial distribution plus transition table of a walk chain."""

    initial_probs: np.ndarray
    transitions: Transitions
    _cdf0: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        p = np.asarray(self.initial_probs, dtype=np.float64)
        if p.shape != (self.transitions.size,):
            raise DimensionError("len(initial_probs)", self.transitions.size, p.shape)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise SupportError("initial probabilities must lie on the simplex")
        c = np.cumsum(p)
        c[-1] = 1.0
        object.__setattr__(self, "initial_probs", p)
        object.__setattr__(self, "_cdf0", c)

    @classmethod
    def custom(cls, initial_probs, transition_probs, h_matrix, mode=FORWARD,
               termination=WeightCutoff(), rho=None):
        """Kernel from explicit probabilities; support conditions are checked."""
        t = _build_transitions(h_matrix, mode, transition_probs, termination, rho)
        return cls(np.asarray(initial_probs, dtype=np.float64), t)

    @property
    def mode(self):
        return self.transitions.mode

    @property
    def termination(self):
        return self.transitions.termination

    @property
    def transition_probs(self):
        return self.transitions.matrix()

    def with_start(self, v):
        """Same transitions, initial distribution proportional to ``|v|``."""
        return ChainKernel(_initial_probs(v), self.transitions)

    def sample_start(self, u):
        k = np.searchsorted(self._cdf0, u, side="right")
        return np.minimum(k, self.transitions.size - 1)

    def check_start_support(self, v):
        bad = np.flatnonzero((np.asarray(v) != 0) & (self.initial_probs == 0))
        if bad.size:
            raise SupportError(f"start vector entry {bad[0]} is nonzero but its initial probability is 0")


def kernel_from_operator(h_matrix, v, mode=FORWARD, termination=WeightCutoff(), rho=None):
    """Absolute-value importance kernel for ``H`` (forward) or ``H^T`` (adjoint).

    ``p`` is proportional to ``|v|``; row ``i`` of ``P`` is proportional to
    ``|M[i, :]|`` and sums to ``1 - kill[i]`` under :class:`KillingProb`, to 1
    otherwise.  All-zero rows get no transitions: walks die there.
    """
    probs = _proportional_probs(h_matrix, mode, termination)
    t = _build_transitions(h_matrix, mode, probs, termination, rho)
    return ChainKernel(_initial_probs(v), t)


@dataclass(frozen=True)
class WalkConfig:
    n_walks: int = 10_000
    seed: int = 0
    termination: Termination = field(default_factory=WeightCutoff)
    max_steps: int = 10_000
    kernel: Optional[ChainKernel] = None
    workers: int = 1
    #: add the zeroth Neumann term exactly instead of sampling it
    exact_initial_term: bool = False

    def __post_init__(self):
        if self.n_walks < 1:
            raise ValueError("n_walks must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class EstimateReport:
    estimate: np.ndarray
    sample_variance: np.ndarray
    n_walks: int
    mean_walk_length: float
    total_steps: int
    n_truncated: int = 0
    bias_bound: float = 0.0
    n_flagged: int = 0

    @property
    def std_error(self):
        return np.sqrt(self.sample_variance / self.n_walks)


def _run_chunked(n_total, fn, workers):
    bounds = [(lo, min(lo + CHUNK, n_total)) for lo in range(0, n_total, CHUNK)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda b: fn(*b), bounds))
    return [fn(lo, hi) for lo, hi in bounds]


def simulate(transitions, starts, w0, walk_ids, key, max_steps, visit):
    """Advance a batch of walks until each one stops.

    ``visit(step, idx, states, weights)`` receives, at every step, the batch
    positions of the walks still running, their states and their weights
    (``W_step``); step 0 is the start.  Returns per-walk transition counts
    and the number of walks cut off by ``max_steps`` or a hard cap.
    """
    t = transitions
    term = t.termination
    n = starts.shape[0]
    idx = np.arange(n)
    states = np.asarray(starts, dtype=np.int64).copy()
    w = np.asarray(w0, dtype=np.float64).copy()
    floor = None
    if isinstance(term, WeightCutoff):
        floor = term.eps * np.abs(w)
    ids = np.asarray(walk_ids, dtype=np.uint64)
    lengths = np.zeros(n, dtype=np.int64)
    truncated = 0
    step = 0
    visit(0, idx, states, w)
    while idx.size:
        if isinstance(term, FixedLength) and step >= term.length:
            break
        if floor is not None:
            keep = np.abs(w) >= floor[idx]
            idx, states, w = idx[keep], states[keep], w[keep]
            if t.hard_cap is not None and step >= t.hard_cap:
                truncated += idx.size
                break
        if step >= max_steps:
            truncated += idx.size
            break
        if not idx.size:
            break
        kill = t.kill[states]
        maybe = kill > 0
        if maybe.any():
            u = rng.uniforms(key, ids[idx], step, 1)
            keep = u >= kill
            idx, states, w = idx[keep], states[keep], w[keep]
            if not idx.size:
                break
        u = rng.uniforms(key, ids[idx], step, 2)
        pos = t.sample(states, u)
        states = t.indices[pos]
        w = w * t.ratio[pos]
        step += 1
        lengths[idx] += 1
        visit(step, idx, states, w)
    return lengths, truncated


def _bias_bound(t, max_steps, w0_max, scale):
    q = t.op_norm
    if q == 0.0:
        return 0.0
    if q >= 1.0:
        return math.inf
    term = t.termination
    if isinstance(term, WeightCutoff):
        cap = max_steps if t.hard_cap is None else min(t.hard_cap, max_steps)
        tail = max(term.eps, q ** cap)
    elif isinstance(term, FixedLength):
        tail = q ** min(term.length, max_steps)
    else:
        tail = q ** max_steps
    return float(w0_max * scale * tail * q / (1.0 - q))


def _kernel_for(fp, v, mode, cfg):
    k = cfg.kernel
    if k is None:
        return kernel_from_operator(fp.h_matrix, v, mode, cfg.termination, fp.rho)
    if k.mode != mode:
        raise SupportError(f"kernel was built for {k.mode} walks, not {mode}")
    src = k.transitions.source
    if src is not fp.h_matrix:
        same = src.shape == fp.h_matrix.shape and abs_matrix(src - fp.h_matrix).max() == 0
        if not same:
            raise SupportError("kernel was built for a different operator")
    k.check_start_support(v)
    return k


def forward_estimate(fp, h_vec, cfg=WalkConfig()):
    """Estimate ``<h, x>`` for ``x = a + H x`` with forward walks.

    Each walk starts at ``k_0 ~ p`` with weight ``h[k_0] / p[k_0]`` and adds
    ``W_l * a[k_l]`` at every step, the weight picking up ``H[k, j] / P[k, j]``
    per transition.
    """
    h = as_vector(h_vec, "h")
    if h.shape[0] != fp.size:
        raise DimensionError("len(h)", fp.size, h.shape[0])
    kernel = _kernel_for(fp, h, FORWARD, cfg)
    a = np.asarray(fp.a_vec)
    key = rng.stream_key(cfg.seed, _TAG_FORWARD)
    n = cfg.n_walks
    skip0 = cfg.exact_initial_term

    def chunk(lo, hi):
        ids = np.arange(lo, hi, dtype=np.uint64)
        starts = kernel.sample_start(rng.uniforms(key, ids, 0, 0))
        w0 = h[starts] / kernel.initial_probs[starts]
        x = np.zeros(hi - lo)

        def visit(step, idx, states, w):
            if step or not skip0:
                x[idx] += w * a[states]

        lengths, trunc = simulate(kernel.transitions, starts, w0, ids, key, cfg.max_steps, visit)
        return x, lengths, trunc

    parts = _run_chunked(n, chunk, cfg.workers)
    x = np.concatenate([p[0] for p in parts])
    lengths = np.concatenate([p[1] for p in parts])
    est = x.mean() + (float(h @ a) if skip0 else 0.0)
    var = x.var(ddof=1) if n > 1 else 0.0
    support = h != 0
    w0_max = float(np.max(np.abs(h[support]) / kernel.initial_probs[support]))
    return EstimateReport(
        estimate=np.array([est]), sample_variance=np.array([var]), n_walks=n,
        mean_walk_length=float(lengths.mean()), total_steps=int(lengths.sum()),
        n_truncated=int(sum(p[2] for p in parts)),
        bias_bound=_bias_bound(kernel.transitions, cfg.max_steps, w0_max, float(np.abs(a).max(initial=0.0))))


def forward_estimate_components(fp, components, cfg=WalkConfig()):
    """Estimate the listed entries of ``x``, ``cfg.n_walks`` forward walks each.

    Component ``i`` uses walk ids ``i * n_walks + w`` of one seeded stream, so
    its estimate does not depend on which other components are requested.
    """
    comps = np.asarray(components, dtype=np.int64).ravel()
    m = fp.size
    if comps.size == 0:
        raise ValueError("components must be nonempty")
    if comps.min() < 0 or comps.max() >= m:
        raise DimensionError("component index", f"in [0, {m})", comps.tolist())
    if cfg.kernel is not None:
        kernel = cfg.kernel
        _kernel_for(fp, np.zeros(m), FORWARD, cfg)
    else:
        kernel = kernel_from_operator(fp.h_matrix, np.ones(m), FORWARD, cfg.termination, fp.rho)
    t = kernel.transitions
    a = np.asarray(fp.a_vec)
    key = rng.stream_key(cfg.seed, _TAG_COMPONENTS)
    n = cfg.n_walks
    total = comps.size * n
    skip0 = cfg.exact_initial_term

    def chunk(lo, hi):
        flat = np.arange(lo, hi)
        which = comps[flat // n]
        ids = (which * n + flat % n).astype(np.uint64)
        x = np.zeros(hi - lo)

        def visit(step, idx, states, w):
            if step or not skip0:
                x[idx] += w * a[states]

        lengths, trunc = simulate(t, which, np.ones(hi - lo), ids, key, cfg.max_steps, visit)
        return x, lengths, trunc

    parts = _run_chunked(total, chunk, cfg.workers)
    x = np.concatenate([p[0] for p in parts]).reshape(comps.size, n)
    lengths = np.concatenate([p[1] for p in parts])
    est = x.mean(axis=1) + (a[comps] if skip0 else 0.0)
    var = x.var(axis=1, ddof=1) if n > 1 else np.zeros(comps.size)
    return EstimateReport(
        estimate=est, sample_variance=var, n_walks=n,
        mean_walk_length=float(lengths.mean()), total_steps=int(lengths.sum()),
        n_truncated=int(sum(p[2] for p in parts)),
        bias_bound=_bias_bound(t, cfg.max_steps, 1.0, float(np.abs(a).max(initial=0.0))))


def adjoint_estimate(fp, cfg=WalkConfig()):
    """Estimate all of ``x`` from walks on ``H^T`` started in proportion to ``|a|``.

    A walk starts at ``k_0 ~ p`` with weight ``a[k_0] / p[k_0]`` and deposits
    its current weight into the state it occupies at every step; the weight
    picks up ``H[j, k] / P[k, j]`` per transition ``k -> j``.
    """
    a = np.asarray(fp.a_vec)
    m = fp.size
    skip0 = cfg.exact_initial_term
    if not np.any(a):
        return EstimateReport(np.zeros(m), np.zeros(m), cfg.n_walks, 0.0, 0)
    kernel = _kernel_for(fp, a, ADJOINT, cfg)
    key = rng.stream_key(cfg.seed, _TAG_ADJOINT)
    n = cfg.n_walks

    def chunk(lo, hi):
        ids = np.arange(lo, hi, dtype=np.uint64)
        starts = kernel.sample_start(rng.uniforms(key, ids, 0, 0))
        w0 = a[starts] / kernel.initial_probs[starts]
        walk, comp, weight = [], [], []

        def visit(step, idx, states, w):
            if step or not skip0:
                walk.append(idx)
                comp.append(states)
                weight.append(w)

        lengths, trunc = simulate(kernel.transitions, starts, w0, ids, key, cfg.max_steps, visit)
        if not walk:
            return np.zeros(m), np.zeros(m), lengths, trunc
        walk = np.concatenate(walk)
        comp = np.concatenate(comp)
        weight = np.concatenate(weight)
        s1 = np.bincount(comp, weights=weight, minlength=m)
        # per-(walk, component) totals for the variance
        pair, inv = np.unique(walk * m + comp, return_inverse=True)
        tot = np.bincount(inv, weights=weight)
        s2 = np.bincount(pair % m, weights=tot * tot, minlength=m)
        return s1, s2, lengths, trunc

    parts = _run_chunked(n, chunk, cfg.workers)
    s1 = np.zeros(m)
    s2 = np.zeros(m)
    for p in parts:
        s1 += p[0]
        s2 += p[1]
    lengths = np.concatenate([p[2] for p in parts])
    est = s1 / n
    if n > 1:
        var = np.maximum((s2 - s1 * s1 / n) / (n - 1), 0.0)
    else:
        var = np.zeros(m)
    if skip0:
        est = est + a
    support = a != 0
    w0_max = float(np.max(np.abs(a[support]) / kernel.initial_probs[support]))
    return EstimateReport(
        estimate=est, sample_variance=var, n_walks=n,
        mean_walk_length=float(lengths.mean()), total_steps=int(lengths.sum()),
        n_truncated=int(sum(p[3] for p in parts)),
        bias_bound=_bias_bound(kernel.transitions, cfg.max_steps, w0_max, 1.0))


def path_weight(kernel, v, path):
    """Weight ``W_l`` and probability of one explicit path under ``kernel``.

    Uses the same table entries as the simulator; handy for enumeration
    checks of the estimator on tiny systems.
    """
    t = kernel.transitions
    k0 = path[0]
    prob = float(kernel.initial_probs[k0])
    if prob == 0.0:
        return 0.0, 0.0
    w = float(v[k0]) / prob
    for k, j in zip(path[:-1], path[1:]):
        pos = t.position(k, j)
        if pos is None:
            return 0.0, 0.0
        prob *= t.probs[pos]
        w *= t.ratio[pos]
    return w, prob


__all__ = [
    "ADJOINT", "FORWARD", "ChainKernel", "EstimateReport", "FixedLength", "KillingProb",
    "Transitions", "WalkConfig", "WeightCutoff", "adjoint_estimate", "forward_estimate",
    "forward_estimate_components", "kernel_from_operator", "path_weight", "simulate",
]
