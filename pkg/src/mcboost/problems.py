"""Seeded problem generators for the experiments."""
import numpy as np

from .core import FixedPointSystem, LinearSystem

#: extra diagonal weight on top of strict dominance
DOMINANCE_MARGIN = 0.1


def gen_diag_dominant(m, off_diag_scale=0.5, seed=0):
    """Random strictly diagonally dominant system.

    Off-diagonal entries are uniform on ``[-1, 1] * off_diag_scale`` and
    ``A_ii = sum_{j != i} |A_ij| * (1 + margin) / off_diag_scale``, so every
    row of the Jacobi matrix ``|H|`` sums to ``off_diag_scale / (1 + margin)``.
    ``b`` is uniform on ``[0, 1]``.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    if not 0 < off_diag_scale < 1:
        raise ValueError("off_diag_scale must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, size=(m, m)) * off_diag_scale
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(a, np.abs(a).sum(axis=1) * (1.0 + DOMINANCE_MARGIN) / off_diag_scale)
    b = rng.uniform(0.0, 1.0, size=m)
    return LinearSystem(a, b)


def halton_dense_matrix(m):
    """``H_ij = 0.9 / (m + i + j)`` with 1-based ``i`` and ``j``."""
    i = np.arange(1, m + 1, dtype=np.float64)
    return 0.9 / (m + i[:, None] + i[None, :])


def gen_halton_dense(m, seed=0):
    """Dense test problem with known solution.

    Returns ``(fp, x_true)`` where ``x_true`` is uniform on ``[0, 1]`` and
    ``a = x_true - H x_true``.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    h = halton_dense_matrix(m)
    x = np.random.default_rng(seed).uniform(0.0, 1.0, size=m)
    return FixedPointSystem(h, x - h @ x), x
