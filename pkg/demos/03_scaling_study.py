"""Runtime shape of the five methods as the system grows.

Times every method on diagonally dominant systems of increasing size and
prints each method's runtime relative to the smallest size.  Plain Monte
Carlo does a fixed amount of work per estimated component, so its ratio
stays near 1.  Gauss-Seidel grows like m^2 per sweep.  The CLI equivalent is
``mcboost-bench scaling --sizes 100,200,400 --repeats 3``.
"""
from mcboost.bench import METHODS, cmd_scaling

sizes = [100, 200, 400]
records = cmd_scaling(sizes, METHODS, seed=0, repeats=3)
table = {}
for r in records:
    table.setdefault(r.method, {})[r.m] = r
print(f"{'method':>15}" + "".join(f"{m:>12}" for m in sizes) + "   ratio  residual@max")
for method, row in table.items():
    t = [row[m].runtime_seconds for m in sizes]
    print(f"{method:>15}" + "".join(f"{v * 1e3:10.2f}ms" for v in t)
          + f"  {t[-1] / t[0]:6.2f}  {row[sizes[-1]].relative_residual:.1e}")
