"""Random-walk linear solvers with Monte Carlo residual correction.

The package solves ``A x = b`` through its fixed-point form ``x = a + H x``
with Neumann-series random walks, and sharpens the walk estimates by
repeated residual correction ("boosting").  Jacobi and Gauss-Seidel
baselines, weighted least-squares kernels and a Fredholm integral-equation
estimator sit on the same machinery.
"""
from .baselines import IterSolveConfig, IterSolveResult, gauss_seidel_solve, jacobi_solve
from .boost import (EXACT, GREEDY, PPS, BoostConfig, BoostResult, Sampled, boost_solve,
                    estimate_kappa, sampled_correction)
from .core import (CONVERGENCE_GATE, ConvergenceWarning, FixedPointSystem, LinearSystem,
                   build_fixed_point, check_convergence, direct_solve, estimate_spectral_radius,
                   neumann_partial_sum, residual, residual_fp)
from .errors import (DimensionError, DivergenceError, IrlsError, McBoostError, NonFiniteError,
                     NotPositiveDefiniteError, ParseError, SingularError, SupportError,
                     WalkDesignError, ZeroDiagonalError)
from .fredholm import (Kernel1D, SubStochasticWalk, default_subwalk, fredholm_estimate,
                       nystrom_discretize, nystrom_evaluate)
from .lsq import (IrlsConfig, MStepProblem, StableMStepProblem, WlsProblem, irls_solve,
                  mstep_solve, partitioned_inverse, stable_mstep_solve, wls_solve)
from .problems import gen_diag_dominant, gen_halton_dense
from .walk import (ADJOINT, FORWARD, ChainKernel, EstimateReport, FixedLength, KillingProb,
                   WalkConfig, WeightCutoff, adjoint_estimate, forward_estimate,
                   forward_estimate_components, kernel_from_operator)

__version__ = "0.1.0"

__all__ = [
    "IterSolveConfig",
    "IterSolveResult",
    "gauss_seidel_solve",
    "jacobi_solve",
    "EXACT",
    "GREEDY",
    "PPS",
    "BoostConfig",
    "BoostResult",
    "Sampled",
    "boost_solve",
    "estimate_kappa",
    "sampled_correction",
    "CONVERGENCE_GATE",
    "ConvergenceWarning",
    "FixedPointSystem",
    "LinearSystem",
    "build_fixed_point",
    "check_convergence",
    "direct_solve",
    "estimate_spectral_radius",
    "neumann_partial_sum",
    "residual",
    "residual_fp",
    "DimensionError",
    "DivergenceError",
    "IrlsError",
    "McBoostError",
    "NonFiniteError",
    "NotPositiveDefiniteError",
    "ParseError",
    "SingularError",
    "SupportError",
    "WalkDesignError",
    "ZeroDiagonalError",
    "Kernel1D",
    "SubStochasticWalk",
    "default_subwalk",
    "fredholm_estimate",
    "nystrom_discretize",
    "nystrom_evaluate",
    "IrlsConfig",
    "MStepProblem",
    "StableMStepProblem",
    "WlsProblem",
    "irls_solve",
    "mstep_solve",
    "partitioned_inverse",
    "stable_mstep_solve",
    "wls_solve",
    "gen_diag_dominant",
    "gen_halton_dense",
    "ADJOINT",
    "FORWARD",
    "ChainKernel",
    "EstimateReport",
    "FixedLength",
    "KillingProb",
    "WalkConfig",
    "WeightCutoff",
    "adjoint_estimate",
    "forward_estimate",
    "forward_estimate_components",
    "kernel_from_operator",
]
