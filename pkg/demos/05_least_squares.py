"""Least squares kernels: robust line fit and a constrained M-step.

An L1 line fit by iteratively reweighted least squares shrugs off two gross
outliers; its inner normal-equation solves can use the direct solver or
boosted random walks.  The stable M-step then moves rows with exploding
weight into an equality-constraint block instead of letting them swamp the
normal equations.
"""
import numpy as np

from mcboost import (BoostConfig, IrlsConfig, StableMStepProblem, WalkConfig, WlsProblem,
                     irls_solve, stable_mstep_solve, wls_solve)
from mcboost.lsq import l1_weights

rng = np.random.default_rng(0)
t = np.linspace(0, 1, 40)
design = np.column_stack((np.ones_like(t), t))
obs = 1.0 + 2.0 * t + 0.02 * rng.normal(size=t.size)
obs[[5, 30]] += [4.0, -3.0]
p = WlsProblem(design, obs, np.ones_like(t))

print("ordinary least squares  ", np.round(wls_solve(p), 4))
res = irls_solve(p, IrlsConfig(weight_update=l1_weights(1e-6), max_outer=100))
print(f"IRLS (L1), {res.iterations:>2} iterations", np.round(res.x, 4))
# five outer iterations with each inner solver; the two traces should coincide
boosted = BoostConfig(inner=WalkConfig(n_walks=2000, exact_initial_term=True), rounds=60,
                      target_residual=1e-10)
res_d = irls_solve(p, IrlsConfig(weight_update=l1_weights(1e-6), max_outer=5))
res_b = irls_solve(p, IrlsConfig(weight_update=l1_weights(1e-6), max_outer=5, inner=boosted))
print("5 iterations, direct    ", np.round(res_d.x, 6))
print("5 iterations, boosted   ", np.round(res_b.x, 6))

x = rng.normal(size=(12, 3))
lam_inv = rng.uniform(0.5, 1.5, size=12)
lam_inv[4] = np.inf  # a support row: its weight has diverged
prob = StableMStepProblem.from_weights(x, lam_inv, np.eye(3))
beta, psi = stable_mstep_solve(prob)
print(f"\nstable M-step: {prob.x_s.shape[0]} constraint row, X_s beta = {(prob.x_s @ beta)[0]:.12f}, "
      f"multiplier {psi[0]:+.4f}")
