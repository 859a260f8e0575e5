from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fp_solution, random_fp
from mcboost.boost import (EXACT, GREEDY, PPS, BoostConfig, Sampled, boost_solve, estimate_kappa,
                           greedy_rhs, pps_inclusion_probabilities, sample_rhs, sampled_correction,
                           systematic_sample)
from mcboost.core import FixedPointSystem, build_fixed_point, direct_solve
from mcboost.errors import SupportError
from mcboost.problems import gen_diag_dominant
from mcboost.walk import ADJOINT, FORWARD, WalkConfig, adjoint_estimate, kernel_from_operator


def exact_correction(fp):
    return direct_solve(np.eye(fp.size) - np.asarray(fp.h_matrix), fp.a_vec)


def design_expectation(d, n):
    """Exact expectation of ``sample_rhs(d, n, u)`` over ``u ~ U[0, 1)``."""
    pi = pps_inclusion_probabilities(d, n)
    rest = pi[(pi > 0) & (pi < 1)]
    cuts = np.unique(np.concatenate(([0.0, 1.0], np.mod(np.cumsum(rest), 1.0))))
    total = np.zeros_like(d)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi > lo:
            total += (hi - lo) * sample_rhs(d, n, 0.5 * (lo + hi))
    return total


def test_zero_operator_converges_in_round_zero():
    fp = FixedPointSystem(np.zeros((4, 4)), [1.0, 2.0, -1.0, 0.5])
    res = boost_solve(fp, BoostConfig(inner=WalkConfig(n_walks=100, exact_initial_term=True)))
    assert res.converged and res.rounds_used == 1
    np.testing.assert_allclose(res.x, fp.a_vec, rtol=1e-15)
    assert res.residual_history == [0.0]


def test_zero_rhs():
    res = boost_solve(FixedPointSystem(np.eye(3) * 0.2, np.zeros(3)))
    assert res.converged and not np.any(res.x)


def test_oracle_correction_finishes_in_one_round():
    fp = random_fp(30, 0.8, seed=1)
    res = boost_solve(fp, BoostConfig(rounds=5, target_residual=1e-12), correction=exact_correction)
    assert res.rounds_used == 1 and res.converged
    np.testing.assert_allclose(res.x, fp_solution(fp), rtol=1e-12)
    # starting from zero the first correction is the whole solution
    res = boost_solve(fp, BoostConfig(initial_walks=0, target_residual=1e-12), correction=exact_correction)
    assert res.rounds_used == 2 and res.residual_history[0] == pytest.approx(1.0)
    assert res.final_residual < 1e-12


def test_correction_system_reuses_operator():
    fp = random_fp(10, 0.5, seed=3)
    seen = []

    def spy(corr):
        seen.append(corr.h_matrix)
        return exact_correction(corr)

    boost_solve(fp, BoostConfig(initial_walks=0, target_residual=1e-14), correction=spy)
    assert seen and all(h is fp.h_matrix for h in seen)


def test_exact_variant_geometric_decrease(dd200):
    x = fp_solution(dd200)
    res = boost_solve(dd200, BoostConfig(inner=WalkConfig(n_walks=5000, exact_initial_term=True, seed=1),
                                         rounds=20, target_residual=1e-6))
    assert res.converged and res.final_residual <= 1e-6
    r = res.residual_history
    ratios = np.array(r[2:]) / np.array(r[1:-1])
    assert np.mean(ratios <= 0.9) >= 0.9
    assert res.kappa_estimate < 0.9
    assert np.linalg.norm(res.x - x) / np.linalg.norm(x) < 1e-5
    assert res.total_walks == 5000 * res.rounds_used


def test_kappa_stable_across_seeds(dd200):
    kappas = []
    for seed in range(4):
        cfg = BoostConfig(inner=WalkConfig(n_walks=2000, exact_initial_term=True, seed=seed),
                          rounds=8, target_residual=1e-14)
        kappas.append(boost_solve(dd200, cfg).kappa_estimate)
    assert max(kappas) < 1
    assert max(kappas) - min(kappas) <= 0.15


def test_estimate_kappa_examples():
    assert estimate_kappa([1, 0.1, 0.01, 0.001]) == pytest.approx(0.1)
    assert estimate_kappa([8, 4, 2, 1]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        estimate_kappa([1, 0.5])
    with pytest.raises(ValueError):
        estimate_kappa([1, 0.0, 0.1])


def test_kappa_only_reported_for_positive_histories():
    fp = FixedPointSystem(np.zeros((3, 3)), np.ones(3))
    assert boost_solve(fp).kappa_estimate is None


def test_pps_probabilities_sum_and_caps():
    d = np.array([10.0, 1.0, 1.0, 1.0, 0.0, 1.0])
    pi = pps_inclusion_probabilities(d, 3)
    assert pi[0] == 1.0 and pi[4] == 0.0
    assert pi.sum() == pytest.approx(3.0)
    np.testing.assert_allclose(pi[[1, 2, 3, 5]], 0.5)
    np.testing.assert_array_equal(pps_inclusion_probabilities(d, 6), (d != 0).astype(float))


def test_single_support_selected_with_weight_one():
    d = 5.0 * np.eye(6)[3]
    for u in (0.0, 0.3, 0.999):
        np.testing.assert_array_equal(sample_rhs(d, 1, u), d)


@pytest.mark.parametrize("m,n", [(m, n) for m in range(2, 7) for n in range(1, 4) if n <= m])
def test_sampled_rhs_unbiased_by_enumeration(m, n):
    d = np.random.default_rng(m * 7 + n).uniform(-3, 3, size=m)
    np.testing.assert_allclose(design_expectation(d, n), d, rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(d=st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=12), n=st.integers(1, 12),
       u=st.floats(0, 1, exclude_max=True))
def test_systematic_sample_size(d, n, u):
    d = np.array(d)
    n = min(n, d.size)
    pi = pps_inclusion_probabilities(d, n)
    idx = systematic_sample(pi, u)
    support = np.count_nonzero(d)
    assert idx.size == min(n, support) or abs(idx.size - pi.sum()) < 1
    assert np.all(d[idx] != 0)
    assert np.all(pi[pi >= 1] == 1)
    assert np.all(np.isin(np.flatnonzero(pi >= 1), idx))


def test_greedy_rhs_keeps_largest():
    d = np.array([0.1, -5.0, 2.0, 0.3])
    np.testing.assert_array_equal(greedy_rhs(d, 2), [0, -5.0, 2.0, 0])
    np.testing.assert_array_equal(greedy_rhs(d, 4), d)


def test_sampled_full_columns_equals_exact_round():
    fp = random_fp(8, 0.5, seed=2)
    cfg = WalkConfig(n_walks=3000, seed=4)
    z = sampled_correction(fp, 8, cfg)
    ref = adjoint_estimate(fp, cfg).estimate
    np.testing.assert_array_equal(z, ref)


def test_sampled_correction_edge_cases():
    fp = random_fp(5, 0.5, seed=2)
    assert not np.any(sampled_correction(fp.with_rhs(np.zeros(5)), 2))
    with pytest.raises(ValueError):
        sampled_correction(fp, 0)
    with pytest.raises(ValueError):
        sampled_correction(fp, 6)
    with pytest.raises(ValueError):
        Sampled(0)
    with pytest.raises(ValueError):
        Sampled(2, design="bogus")


def test_sampled_correction_mean_matches_exact():
    fp = random_fp(30, 0.5, seed=6)
    z_exact = fp_solution(fp)
    reps = np.array([sampled_correction(fp, 8, WalkConfig(n_walks=200, seed=s)) for s in range(1500)])
    mean = reps.mean(axis=0)
    se = reps.std(axis=0, ddof=1) / np.sqrt(len(reps))
    z = (mean - z_exact) / se
    assert np.mean(np.abs(z) < 4) >= 0.95


# PPS reweighting noise grows like sqrt(m / sample_cols), so it only contracts with a large sample
@pytest.mark.parametrize("design,cols", [(GREEDY, 30), (PPS, 100)])
def test_sampled_variant_reduces_residual(design, cols):
    fp = build_fixed_point(gen_diag_dominant(100, seed=3))
    cfg = BoostConfig(inner=WalkConfig(n_walks=2000, exact_initial_term=True, seed=1), rounds=15,
                      target_residual=1e-12, variant=Sampled(cols, design))
    res = boost_solve(fp, cfg)
    assert res.final_residual < res.residual_history[0]
    # incremental residual update agrees with a fresh matvec
    assert res.residual_history[-1] == pytest.approx(res.final_residual, rel=1e-8)


def test_prebuilt_kernel_matches_internal_kernel(dd200):
    inner = WalkConfig(n_walks=500, exact_initial_term=True, seed=2)
    k = kernel_from_operator(dd200.h_matrix, dd200.a_vec, ADJOINT, inner.termination, dd200.rho)
    a = boost_solve(dd200, BoostConfig(inner=inner, rounds=3))
    b = boost_solve(dd200, BoostConfig(inner=replace(inner, kernel=k), rounds=3))
    np.testing.assert_array_equal(a.x, b.x)
    with pytest.raises(SupportError):
        fwd = kernel_from_operator(dd200.h_matrix, dd200.a_vec, FORWARD)
        boost_solve(dd200, BoostConfig(inner=replace(inner, kernel=fwd)))


def test_polish_reduces_residual():
    fp = random_fp(20, 0.5, seed=11)
    inner = WalkConfig(n_walks=200, seed=1)
    plain = boost_solve(fp, BoostConfig(inner=inner, rounds=2))
    polished = boost_solve(fp, BoostConfig(inner=inner, rounds=2, deterministic_polish=True, polish_sweeps=3))
    assert polished.final_residual < plain.final_residual


def test_sparse_operator_runs():
    fp = random_fp(40, 0.5, seed=4, density=0.2)
    sparse = FixedPointSystem(sp.csr_array(fp.h_matrix), fp.a_vec)
    cfg = BoostConfig(inner=WalkConfig(n_walks=1000, seed=3), rounds=4)
    np.testing.assert_allclose(boost_solve(sparse, cfg).x, boost_solve(fp, cfg).x, rtol=1e-10)


def test_seeded_runs_are_identical(dd200):
    cfg = BoostConfig(inner=WalkConfig(n_walks=300, seed=9), rounds=3)
    assert boost_solve(dd200, cfg).x.tobytes() == boost_solve(dd200, cfg).x.tobytes()


def test_monotone_advantage_over_single_estimate():
    wins = 0
    suite = range(10)
    for seed in suite:
        fp = build_fixed_point(gen_diag_dominant(50, seed=seed))
        x = fp_solution(fp)
        cfg = BoostConfig(inner=WalkConfig(n_walks=1000, seed=seed), rounds=5, target_residual=1e-14)
        res = boost_solve(fp, cfg)
        single = adjoint_estimate(fp, WalkConfig(n_walks=res.total_walks, seed=seed + 100)).estimate
        wins += np.linalg.norm(res.x - x) <= np.linalg.norm(single - x)
    assert wins >= 0.8 * len(suite)


def test_config_validation():
    with pytest.raises(ValueError):
        BoostConfig(rounds=0)
    with pytest.raises(ValueError):
        BoostConfig(target_residual=0)
    with pytest.raises(ValueError):
        BoostConfig(variant="other")
    assert BoostConfig().variant == EXACT
