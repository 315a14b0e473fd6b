"""Dividend and capital-injection threshold policies for a diffusion surplus.

Solvers for exponential discounting (optimal policy) and two-rate
discounting (equilibrium policy), closed-form value functions, and a Monte
Carlo simulator to check them.
"""

from .benchmark import BenchmarkSolution, eval_Vc, solve_benchmark
from .equilibrium import (
    EquilibriumSolution,
    auxiliary_g,
    coefficients_at,
    eval_V,
    hjb_residual,
    solve_equilibrium,
    threshold_residual,
)
from .errors import DividendEqError, NumericalError, RootNotFound, ValidationError
from .model import (
    Exponential,
    FeedbackPolicy,
    ModelParams,
    PseudoExponential,
    StrategyCase,
    discount_factor,
    policy_action,
    validate_params,
)
from .piecewise import ThetaSet, compute_thetas

__version__ = "0.1.0"
