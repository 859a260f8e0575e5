import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fp_solution, random_fp
from mcboost.core import FixedPointSystem
from mcboost.errors import DimensionError, SupportError
from mcboost.walk import (ADJOINT, CHUNK, FORWARD, ChainKernel, FixedLength, KillingProb,
                          WalkConfig, WeightCutoff, adjoint_estimate, forward_estimate,
                          forward_estimate_components, kernel_from_operator, path_weight)


def z_scores(report, truth):
    return (report.estimate - truth) / report.std_error


def test_zero_operator_forward_is_exact():
    fp = FixedPointSystem(np.zeros((3, 3)), [2.0, -1.0, 4.0])
    k = kernel_from_operator(fp.h_matrix, [1.0, 0, 0])
    np.testing.assert_array_equal(k.initial_probs, [1, 0, 0])
    rep = forward_estimate(fp, [1.0, 0, 0], WalkConfig(n_walks=50))
    assert rep.estimate[0] == 2.0 and rep.sample_variance[0] == 0.0
    assert rep.mean_walk_length == 0.0 and rep.total_steps == 0


def test_single_nonzero_row_normalisation():
    h = np.zeros((3, 3))
    h[0, 1] = 0.5
    k = kernel_from_operator(h, np.ones(3), FORWARD)
    assert k.transition_probs[[0], [1]][0] == 1.0
    k = kernel_from_operator(h, np.ones(3), FORWARD, KillingProb(0.2))
    assert k.transition_probs[[0], [1]][0] == pytest.approx(0.8)
    np.testing.assert_allclose(k.transitions.kill, [0.2, 1.0, 1.0])


def test_mixed_sign_rows_match_direct_normalisation():
    h = np.array([[0.0, -0.3, 0.1], [0.2, 0.0, -0.2], [-0.05, 0.15, 0.0]])
    for mode, mat in ((FORWARD, h), (ADJOINT, h.T)):
        p = kernel_from_operator(h, np.ones(3), mode).transition_probs.toarray()
        np.testing.assert_allclose(p, np.abs(mat) / np.abs(mat).sum(axis=1, keepdims=True), rtol=1e-15)
        t = kernel_from_operator(h, np.ones(3), mode).transitions
        np.testing.assert_allclose(t.matrix().toarray(), p)


def test_kernel_invariants():
    fp = random_fp(6, 0.6, seed=3, density=0.6)
    for term in (WeightCutoff(), KillingProb(0.3), FixedLength(3)):
        k = kernel_from_operator(fp.h_matrix, fp.a_vec, ADJOINT, term)
        assert abs(k.initial_probs.sum() - 1) < 1e-12 and np.all(k.initial_probs >= 0)
        rows = np.asarray(k.transition_probs.sum(axis=1)).ravel()
        assert np.all(rows <= 1 + 1e-12)
        if isinstance(term, KillingProb):
            assert np.all(k.transitions.kill >= 0.3 - 1e-12)


def test_all_zero_start_vector_rejected():
    with pytest.raises(SupportError):
        kernel_from_operator(np.eye(2) * 0.1, np.zeros(2))


def test_custom_kernel_support_checks():
    h = np.array([[0.0, 0.4], [0.3, 0.0]])
    with pytest.raises(SupportError, match=r"\(0, 1\)"):
        ChainKernel.custom([0.5, 0.5], sp.csr_array(np.array([[1.0, 0.0], [1.0, 0.0]])), h)
    with pytest.raises(SupportError):
        ChainKernel.custom([0.5, 0.5], np.array([[0.0, 1.2], [1.0, 0.0]]), h)
    with pytest.raises(SupportError):
        ChainKernel.custom([0.7, 0.7], np.array([[0.0, 1.0], [1.0, 0.0]]), h)
    k = ChainKernel.custom([1.0, 0.0], np.array([[0.5, 0.5], [0.5, 0.5]]), h)
    fp = FixedPointSystem(h, [1.0, 1.0])
    with pytest.raises(SupportError):
        forward_estimate(fp, [0.0, 1.0], WalkConfig(kernel=k))


def test_custom_uniform_kernel_is_unbiased():
    fp = random_fp(4, 0.5, seed=8)
    uniform = np.full((4, 4), 0.25)
    k = ChainKernel.custom(np.full(4, 0.25), uniform, fp.h_matrix)
    h = np.array([1.0, -2.0, 0.5, 0.0])
    rep = forward_estimate(fp, h, WalkConfig(n_walks=100_000, kernel=k, seed=3))
    assert abs(z_scores(rep, h @ fp_solution(fp))[0]) < 4


def test_kernel_for_other_operator_rejected():
    fp = random_fp(4, 0.5, seed=1)
    other = random_fp(4, 0.5, seed=2)
    k = kernel_from_operator(other.h_matrix, np.ones(4))
    with pytest.raises(SupportError):
        forward_estimate(fp, np.ones(4), WalkConfig(kernel=k))
    k = kernel_from_operator(fp.h_matrix, np.ones(4), ADJOINT)
    with pytest.raises(SupportError):
        forward_estimate(fp, np.ones(4), WalkConfig(kernel=k))


@pytest.mark.parametrize("m,length", [(2, 1), (3, 2), (3, 4), (4, 3), (4, 4)])
def test_path_enumeration_is_exact(m, length):
    fp = random_fp(m, 0.7, seed=m * 10 + length)
    h = np.random.default_rng(length).uniform(-1, 1, size=m)
    k = kernel_from_operator(fp.h_matrix, h, FORWARD, FixedLength(length))
    a = np.asarray(fp.a_vec)
    total = 0.0
    prob_sum = 0.0
    for path in itertools.product(range(m), repeat=length + 1):
        w, p = path_weight(k, h, path)
        total += p * w * a[path[-1]]
        prob_sum += p
    expect = h @ np.linalg.matrix_power(np.asarray(fp.h_matrix), length) @ a
    assert abs(total - expect) <= 1e-12 * max(1.0, abs(expect))
    assert abs(prob_sum - 1.0) < 1e-12


def test_forward_three_by_three():
    fp = random_fp(3, 0.5, seed=21)
    rep = forward_estimate(fp, np.ones(3), WalkConfig(n_walks=100_000, seed=5))
    assert abs(z_scores(rep, fp_solution(fp).sum())[0]) < 4
    assert rep.n_walks == 100_000
    assert np.all(rep.sample_variance >= 0)


def test_adjoint_zero_operator_deposits_start_weight():
    fp = FixedPointSystem(np.zeros((3, 3)), [1.0, -2.0, 3.0])
    rep = adjoint_estimate(fp, WalkConfig(n_walks=60_000, seed=1))
    assert np.all(np.abs(z_scores(rep, fp.a_vec)) < 4)
    assert rep.total_steps == 0


def test_adjoint_four_by_four():
    fp = random_fp(4, 0.6, seed=4)
    rep = adjoint_estimate(fp, WalkConfig(n_walks=200_000, seed=9))
    assert np.all(np.abs(z_scores(rep, fp_solution(fp))) < 4)


def test_duality_forward_vs_adjoint():
    fp = random_fp(5, 0.5, seed=13)
    d = np.array([0.3, -1.0, 0.0, 2.0, 0.5])
    adj = adjoint_estimate(fp, WalkConfig(n_walks=100_000, seed=1))
    fwd = forward_estimate(fp, d, WalkConfig(n_walks=100_000, seed=2))
    # the adjoint components are correlated, so bound the variance of <x_hat, d> crudely
    adj_se = np.abs(d) @ adj.std_error
    gap = abs(adj.estimate @ d - fwd.estimate[0])
    assert gap < 4 * (adj_se + fwd.std_error[0])


def test_components_match_adjoint():
    fp = random_fp(5, 0.5, seed=17)
    comp = forward_estimate_components(fp, range(5), WalkConfig(n_walks=40_000, seed=1))
    adj = adjoint_estimate(fp, WalkConfig(n_walks=100_000, seed=2))
    band = 4 * np.sqrt(comp.std_error ** 2 + adj.std_error ** 2)
    assert np.all(np.abs(comp.estimate - adj.estimate) < band)


def test_components_independent_of_request_set():
    fp = random_fp(6, 0.5, seed=2)
    cfg = WalkConfig(n_walks=500, seed=4)
    both = forward_estimate_components(fp, [1, 4], cfg)
    one = forward_estimate_components(fp, [4], cfg)
    assert both.estimate[1] == one.estimate[0]


def test_components_zero_operator_and_errors():
    fp = FixedPointSystem(np.zeros((2, 2)), [3.0, 1.0])
    rep = forward_estimate_components(fp, [0], WalkConfig(n_walks=10))
    assert rep.estimate[0] == 3.0
    with pytest.raises(DimensionError):
        forward_estimate_components(fp, [2], WalkConfig(n_walks=10))
    with pytest.raises(ValueError):
        forward_estimate_components(fp, [], WalkConfig(n_walks=10))


def test_exact_initial_term_keeps_mean():
    fp = random_fp(4, 0.5, seed=30)
    x = fp_solution(fp)
    for skip in (False, True):
        rep = adjoint_estimate(fp, WalkConfig(n_walks=100_000, seed=6, exact_initial_term=skip))
        assert np.all(np.abs(z_scores(rep, x)) < 4.5)


def test_truncation_is_counted():
    fp = random_fp(4, 0.9, seed=2)
    rep = forward_estimate(fp, np.ones(4), WalkConfig(n_walks=1000, max_steps=3))
    assert rep.n_truncated > 0
    assert rep.mean_walk_length <= 3
    rep = forward_estimate(fp, np.ones(4), WalkConfig(n_walks=1000, termination=WeightCutoff(1e-6, 2)))
    assert rep.n_truncated > 0


def test_bias_bound_shrinks_with_eps():
    fp = random_fp(4, 0.5, seed=2)
    loose = forward_estimate(fp, np.ones(4), WalkConfig(n_walks=100, termination=WeightCutoff(1e-2)))
    tight = forward_estimate(fp, np.ones(4), WalkConfig(n_walks=100, termination=WeightCutoff(1e-8)))
    assert 0 < tight.bias_bound < loose.bias_bound


def test_killing_walks_are_unbiased():
    fp = random_fp(4, 0.5, seed=40)
    rep = adjoint_estimate(fp, WalkConfig(n_walks=100_000, termination=KillingProb(0.3), seed=2))
    assert np.all(np.abs(z_scores(rep, fp_solution(fp))) < 4.5)


def test_sparse_operator():
    fp = random_fp(6, 0.5, seed=5, density=0.5)
    sparse = FixedPointSystem(sp.csr_array(fp.h_matrix), fp.a_vec)
    cfg = WalkConfig(n_walks=2000, seed=3)
    dense_rep = adjoint_estimate(fp, cfg)
    sparse_rep = adjoint_estimate(sparse, cfg)
    np.testing.assert_array_equal(dense_rep.estimate, sparse_rep.estimate)


def test_determinism_across_workers():
    fp = random_fp(5, 0.5, seed=1)
    n = 2 * CHUNK + 100
    base = adjoint_estimate(fp, WalkConfig(n_walks=n, seed=77))
    threaded = adjoint_estimate(fp, WalkConfig(n_walks=n, seed=77, workers=3))
    assert base.estimate.tobytes() == threaded.estimate.tobytes()
    assert base.sample_variance.tobytes() == threaded.sample_variance.tobytes()
    f1 = forward_estimate(fp, np.ones(5), WalkConfig(n_walks=n, seed=3))
    f2 = forward_estimate(fp, np.ones(5), WalkConfig(n_walks=n, seed=3, workers=2))
    assert f1.estimate.tobytes() == f2.estimate.tobytes()


def test_different_seeds_differ():
    fp = random_fp(5, 0.5, seed=1)
    a = adjoint_estimate(fp, WalkConfig(n_walks=1000, seed=1))
    b = adjoint_estimate(fp, WalkConfig(n_walks=1000, seed=2))
    assert not np.array_equal(a.estimate, b.estimate)


def test_config_validation():
    with pytest.raises(ValueError):
        WalkConfig(n_walks=0)
    with pytest.raises(ValueError):
        WalkConfig(max_steps=0)
    with pytest.raises(ValueError):
        WalkConfig(workers=0)
    with pytest.raises(ValueError):
        FixedLength(-1)


@settings(max_examples=25, deadline=None)
@given(m=st.integers(2, 30), seed=st.integers(0, 2**32 - 1), density=st.floats(0.1, 1.0))
def test_sampler_matches_binary_search(m, seed, density):
    fp = random_fp(m, 0.5, seed, density)
    t = kernel_from_operator(fp.h_matrix, np.ones(m)).transitions
    rng = np.random.default_rng(seed)
    states = rng.integers(0, m, 500)
    states = states[np.diff(t.indptr)[states] > 0]
    u = rng.random(states.size)
    ref = np.minimum(np.searchsorted(t.cdf, states + u, side="right"), t.indptr[states + 1] - 1)
    np.testing.assert_array_equal(t.sample(states, u), ref)
    assert np.all(t.indptr[states] <= ref)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 300))
def test_report_invariants(seed, n):
    fp = random_fp(4, 0.5, seed)
    rep = adjoint_estimate(fp, WalkConfig(n_walks=n, seed=seed))
    assert rep.n_walks == n
    assert np.all(rep.sample_variance >= 0)
    assert rep.estimate.shape == (4,)
    assert rep.total_steps >= 0 and rep.mean_walk_length >= 0
