"""Error of plain Monte Carlo as the walk budget grows.

Uses the dense instance H_ij = 0.9 / (m + i + j) with a known solution drawn
uniformly from [0, 1], estimates every component with M forward walks and
compares the error with the M^-1/2 reference curve.  The CLI equivalent is
``mcboost-bench convergence --sizes 1000``.
"""
from mcboost.bench import cmd_convergence, reference_curve

records = cmd_convergence(m=300, walk_grid=(10, 25, 50, 100, 250, 500, 1000), seed=0)
print("     M   ||x - x_M||   M^-1/2 reference   seconds")
for r, (_, ref) in zip(records, reference_curve(records)):
    print(f"{r.n_walks:>6}   {r.l2_error:10.4f}   {ref:16.4f}   {r.runtime_seconds:7.3f}")
