import numpy as np
import pytest

from mcboost.core import FixedPointSystem, LinearSystem, build_fixed_point, direct_solve
from mcboost.problems import gen_diag_dominant


def random_fp(m, rho, seed, density=1.0):
    """Random ``H`` scaled so that every row of ``|H|`` sums to ``rho``, plus random ``a``."""
    rng = np.random.default_rng(seed)
    h = rng.uniform(-1.0, 1.0, size=(m, m))
    h[rng.random((m, m)) > density] = 0.0
    rs = np.abs(h).sum(axis=1, keepdims=True)
    h = np.divide(h * rho, rs, out=np.zeros_like(h), where=rs > 0)
    a = rng.uniform(-1.0, 1.0, size=m)
    return FixedPointSystem(h, a)


def fp_solution(fp):
    m = fp.size
    return direct_solve(np.eye(m) - np.asarray(fp.h_matrix), fp.a_vec)


@pytest.fixture
def dd200():
    return build_fixed_point(gen_diag_dominant(200, seed=7))


@pytest.fixture
def small_system():
    return LinearSystem(np.array([[4.0, 1.0, 0.5], [1.0, 5.0, 1.0], [0.5, 1.0, 3.0]]),
                        np.array([1.0, 2.0, 3.0]))
