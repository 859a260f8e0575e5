"""Fredholm equations of the second kind, ``f(x) = g(x) + int K(x, y) f(y) dy``.

A killed random walk ``X_0 = x0, X_1, ...`` moves with a sub-stochastic
density ``P``; at each state it dies with probability ``p(X_n) = 1 -
int P(X_n, y) dy``.  With ``V = K / P`` the quantity

    g(X_tau) / p(X_tau) * V(X_0, X_1) * ... * V(X_{tau-1}, X_tau)

is an unbiased estimate of ``f(x0)``.  A composite-trapezoid Nystrom
discretisation turns the same equation into a :class:`~mcboost.core.LinearSystem`
and serves as the oracle.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng
from .core import LinearSystem, direct_solve
from .errors import SupportError, WalkDesignError
from .walk import EstimateReport, _run_chunked

#: walks whose weight magnitude exceeds this are flagged
WEIGHT_OVERFLOW = 1e12
#: quadrature points per axis for the norm bound
NORM_GRID = 201

_TAG_FREDHOLM = 21


def _eval(k_fn, x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    return np.asarray(k_fn(x, y), dtype=np.float64) * np.ones(x.shape)


def _eval_g(g_fn, x):
    x = np.asarray(x, dtype=np.float64)
    return np.asarray(g_fn(x), dtype=np.float64) * np.ones(x.shape)


def trapezoid_rule(lo, hi, n_nodes):
    """Nodes and weights of the composite trapezoid rule on ``[lo, hi]``."""
    if n_nodes < 2:
        raise ValueError("n_nodes must be >= 2")
    nodes = np.linspace(lo, hi, n_nodes)
    w = np.full(n_nodes, (hi - lo) / (n_nodes - 1))
    w[[0, -1]] *= 0.5
    return nodes, w


@dataclass(frozen=True, eq=False)
class Kernel1D:
    """A kernel ``K(x, y)`` on ``[lo, hi]^2``.

    ``k_fn`` must broadcast over numpy arrays.  ``norm_bound`` is the
    quadrature estimate of ``sup_x int |K(x, y)| dy``, which must stay
    below 1 so that the Neumann series converges.
    """

    k_fn: Callable
    lo: float = 0.0
    hi: float = 1.0
    name: str = "custom"
    norm_bound: float = field(init=False)

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"invalid domain [{self.lo}, {self.hi}]")
        nodes, w = trapezoid_rule(self.lo, self.hi, NORM_GRID)
        vals = self(nodes[:, None], nodes[None, :])
        if not np.all(np.isfinite(vals)):
            raise ValueError("kernel has non-finite values on the domain")
        bound = float(np.max(np.abs(vals) @ w))
        if bound > 1.0 - 1e-6:
            raise ValueError(f"kernel norm bound {bound:.6g} is not below 1")
        object.__setattr__(self, "norm_bound", bound)

    def __call__(self, x, y):
        return _eval(self.k_fn, x, y)

    def contains(self, x):
        return self.lo <= x <= self.hi


def zero_kernel(lo=0.0, hi=1.0):
    return Kernel1D(lambda x, y: np.zeros(np.broadcast(x, y).shape), lo, hi, "zero")


def constant_kernel(lam=0.5, lo=0.0, hi=1.0):
    return Kernel1D(lambda x, y: np.full(np.broadcast(x, y).shape, float(lam)), lo, hi,
                    f"constant({lam})")


def separable_kernel(c=0.4, lo=0.0, hi=1.0):
    """``K(x, y) = c x y``."""
    return Kernel1D(lambda x, y: c * x * y, lo, hi, f"separable({c})")


def gaussian_kernel(amp=0.5, width=0.2, lo=0.0, hi=1.0):
    """``K(x, y) = amp * exp(-(x - y)^2 / (2 width^2))``."""
    return Kernel1D(lambda x, y: amp * np.exp(-0.5 * ((x - y) / width) ** 2), lo, hi,
                    f"gaussian({amp},{width})")


KERNELS = {
    "zero": zero_kernel,
    "constant": constant_kernel,
    "separable": separable_kernel,
    "gaussian": gaussian_kernel,
}


def kernel_from_catalog(name, *params):
    try:
        factory = KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None
    return factory(*params)


@dataclass(frozen=True, eq=False)
class SubStochasticWalk:
    """Transition density proportional to ``|K(x, .)|`` with total mass ``survival``.

    ``|K(x, .)|`` is replaced by its piecewise-linear interpolant on
    ``n_cells`` equal cells, mixed with a fraction ``mix`` of the uniform
    density.  The interpolant is exact for kernels that are piecewise linear
    in ``y`` (constant and ``x y`` kernels among them), and sampling from it
    is exact, so ``V = K / P`` always uses the density actually sampled.
    States whose row of ``K`` vanishes on the grid die with certainty.
    """

    kernel: Kernel1D
    survival: float
    n_cells: int = 128
    mix: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.survival < 1.0:
            raise ValueError("survival must lie in (0, 1)")
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError("mix must lie in [0, 1]")

    @property
    def delta(self):
        """Smallest kill probability over the domain."""
        return 1.0 - self.survival

    @property
    def grid(self):
        return np.linspace(self.kernel.lo, self.kernel.hi, self.n_cells + 1)

    def _rows(self, x):
        """Unnormalised grid values of the proposal shape and their cell masses."""
        k = self.kernel
        f = np.abs(k(np.asarray(x, dtype=np.float64)[:, None], self.grid[None, :]))
        h = (k.hi - k.lo) / self.n_cells
        mass = 0.5 * h * (f[:, :-1] + f[:, 1:])
        total = mass.sum(axis=1)
        if self.mix > 0:
            live = total > 0
            width = k.hi - k.lo
            scale = np.where(live, (1.0 - self.mix) / np.where(live, total, 1.0), 0.0)
            f = f * scale[:, None] + np.where(live, self.mix / width, 0.0)[:, None]
            mass = 0.5 * h * (f[:, :-1] + f[:, 1:])
            total = mass.sum(axis=1)
        return f, mass, total

    def kill_prob(self, x):
        _, _, total = self._rows(np.atleast_1d(x))
        return np.where(total > 0, 1.0 - self.survival, 1.0)

    def density(self, x, y):
        """``P(x, y)`` for paired arrays ``x``, ``y``."""
        x, y = np.broadcast_arrays(np.atleast_1d(np.asarray(x, dtype=np.float64)),
                                   np.atleast_1d(np.asarray(y, dtype=np.float64)))
        f, _, total = self._rows(x.ravel())
        return self._density_from(f, total, y.ravel()).reshape(x.shape)

    def _density_from(self, f, total, y):
        k = self.kernel
        h = (k.hi - k.lo) / self.n_cells
        s = np.clip((y - k.lo) / h, 0.0, self.n_cells)
        j = np.minimum(s.astype(np.int64), self.n_cells - 1)
        t = s - j
        rows = np.arange(y.shape[0])
        shape = (1.0 - t) * f[rows, j] + t * f[rows, j + 1]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(total > 0, self.survival * shape / total, 0.0)

    def sample(self, x, u_cell, u_pos):
        """Draw ``y`` from ``P(x, .) / int P(x, .)``; returns ``(y, P(x, y))``."""
        k = self.kernel
        h = (k.hi - k.lo) / self.n_cells
        f, mass, total = self._rows(x)
        cdf = np.cumsum(mass, axis=1)
        target = u_cell * total
        j = np.minimum((cdf <= target[:, None]).sum(axis=1), self.n_cells - 1)
        rows = np.arange(x.shape[0])
        f0, f1 = f[rows, j], f[rows, j + 1]
        # inverse CDF of the linear density on the cell, in a cancellation-free form
        num = u_pos * (f0 + f1)
        den = f0 + np.sqrt(f0 * f0 + (f1 - f0) * num)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(den > 0, num / den, u_pos)
        y = k.lo + (j + np.clip(t, 0.0, 1.0)) * h
        return y, self._density_from(f, total, y)

    def audit_support(self, n_points=50):
        """Check on a grid that ``P(x, y) > 0`` wherever ``K(x, y) != 0``."""
        k = self.kernel
        xs = np.linspace(k.lo, k.hi, n_points)
        ys = np.linspace(k.lo, k.hi, n_points)
        xx, yy = np.meshgrid(xs, ys, indexing="ij")
        kv = k(xx, yy)
        pv = self.density(xx, yy)
        bad = (kv != 0) & (pv <= 0)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise SupportError(
                f"P({xs[i]:.4g}, {ys[j]:.4g}) = 0 where K is nonzero; use mix > 0")
        return True


def default_subwalk(k, survival=0.8, n_cells=128, mix=0.0):
    """Proposal proportional to ``|K(x, .)|`` with kill probability ``1 - survival``."""
    walk = SubStochasticWalk(k, survival, n_cells, mix)
    walk.audit_support()
    return walk


@dataclass
class FredholmReport(EstimateReport):
    kill_times: np.ndarray = field(default=None, repr=False)


def fredholm_estimate(k, g_fn, walk, x0, n_walks=100_000, seed=0, max_steps=10_000, workers=1):
    """Estimate ``f(x0)`` with ``n_walks`` killed chains.

    Walks that survive ``max_steps`` steps contribute 0 and are counted in
    ``n_truncated``; walks whose weight exceeds ``WEIGHT_OVERFLOW`` in
    magnitude are counted in ``n_flagged`` but still contribute.
    """
    if not k.contains(x0):
        raise ValueError(f"x0 = {x0} lies outside [{k.lo}, {k.hi}]")
    if walk.kernel is not k:
        raise WalkDesignError("walk was built for a different kernel")
    if n_walks < 1:
        raise ValueError("n_walks must be >= 1")
    key = rng.stream_key(seed, _TAG_FREDHOLM)

    def run(lo, hi):
        n = hi - lo
        ids = np.arange(lo, hi, dtype=np.uint64)
        x = np.full(n, float(x0))
        w = np.ones(n)
        est = np.zeros(n)
        tau = np.full(n, max_steps, dtype=np.int64)
        flagged = np.zeros(n, dtype=bool)
        idx = np.arange(n)
        for step in range(max_steps + 1):
            pk = walk.kill_prob(x[idx])
            if np.any(pk <= 0):
                bad = idx[np.argmax(pk <= 0)]
                raise WalkDesignError(f"kill probability {pk.min():.3g} <= 0 at state {x[bad]:.6g}")
            die = rng.uniforms(key, ids[idx], step, 0) < pk
            d = idx[die]
            est[d] = w[d] * _eval_g(g_fn, x[d]) / pk[die]
            tau[d] = step
            idx = idx[~die]
            if not idx.size or step == max_steps:
                break
            y, dens = walk.sample(x[idx], rng.uniforms(key, ids[idx], step, 1),
                                  rng.uniforms(key, ids[idx], step, 2))
            w[idx] *= k(x[idx], y) / dens
            x[idx] = y
            flagged[idx] |= np.abs(w[idx]) > WEIGHT_OVERFLOW
        return est.sum(), (est * est).sum(), tau, int(idx.size), int(flagged.sum())

    parts = _run_chunked(n_walks, run, workers)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    tau = np.concatenate([p[2] for p in parts])
    mean = s1 / n_walks
    var = max(s2 - s1 * s1 / n_walks, 0.0) / (n_walks - 1) if n_walks > 1 else 0.0
    return FredholmReport(
        estimate=np.array([mean]), sample_variance=np.array([var]), n_walks=n_walks,
        mean_walk_length=float(tau.mean()), total_steps=int(tau.sum()),
        n_truncated=sum(p[3] for p in parts), n_flagged=sum(p[4] for p in parts),
        kill_times=tau)


def nystrom_discretize(k, g_fn, n_nodes):
    """Trapezoid Nystrom system ``(I - K_w) f = g`` on ``n_nodes`` equispaced nodes."""
    nodes, w = trapezoid_rule(k.lo, k.hi, n_nodes)
    kw = k(nodes[:, None], nodes[None, :]) * w[None, :]
    return LinearSystem(np.eye(n_nodes) - kw, _eval_g(g_fn, nodes))


def nystrom_evaluate(k, g_fn, f_nodes, x):
    """Nystrom interpolation ``f(x) = g(x) + sum_j w_j K(x, x_j) f_j``."""
    f_nodes = np.asarray(f_nodes, dtype=np.float64)
    nodes, w = trapezoid_rule(k.lo, k.hi, f_nodes.shape[0])
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return _eval_g(g_fn, x) + k(x[:, None], nodes[None, :]) @ (w * f_nodes)


def nystrom_solve(k, g_fn, x, n_nodes=200):
    """Solve the Nystrom system directly and interpolate at ``x``."""
    system = nystrom_discretize(k, g_fn, n_nodes)
    return nystrom_evaluate(k, g_fn, direct_solve(system.matrix, system.rhs), x)


def neumann_quadrature(k, g_fn, x, n_nodes=200, n_terms=30):
    """Truncated Neumann series ``sum_{n<=n_terms} (K^n g)(x)`` on the trapezoid grid."""
    nodes, w = trapezoid_rule(k.lo, k.hi, n_nodes)
    kw = k(nodes[:, None], nodes[None, :]) * w[None, :]
    g = _eval_g(g_fn, nodes)
    f = g.copy()
    for _ in range(n_terms):
        f = g + kw @ f
    return nystrom_evaluate(k, g_fn, f, x)


def combined_tolerance(report, n_sigma=4.0, quad_error=1e-4):
    """Allowed gap between a walk estimate and a quadrature value."""
    return n_sigma * float(report.std_error[0]) + quad_error
