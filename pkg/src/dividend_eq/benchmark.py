"""Time-consistent solver for exponential discounting.

The optimal policy is of threshold type.  Which of the three regimes applies
is decided by explicit conditions on the characteristic roots, and in the
three-region regime the injection threshold is the root of an auxiliary
function ``g_c`` built from ``f_c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BracketNotFound, ConditionUndefined, NoSignChange, OutsideDomain, RootNotFound
from .model import ModelParams, StrategyCase
from .numerics import expand_bracket, solve_bracketed
from .piecewise import RateBlock, ThetaSet, compute_thetas, fit_block, fit_closed_form

__all__ = [
    "BenchmarkSolution",
    "compute_thetas",
    "eval_f_c",
    "eval_g_c",
    "find_x_star",
    "kappa",
    "solve_benchmark",
    "eval_Vc",
]


@dataclass(frozen=True)
class BenchmarkSolution:
    """Optimal thresholds and value function for one exponential rate.

    Attributes:
        case: Regime tag.
        x_r: Injection threshold.
        x_l: Dividend threshold.
        block: Coefficients from the dense smooth-fit solve.
        closed: Coefficients from the explicit formulas.
        oracle_gap: Relative gap between the two coefficient sets.
    """

    case: StrategyCase
    x_r: float
    x_l: float
    block: RateBlock
    closed: RateBlock
    oracle_gap: float
    params: ModelParams

    @property
    def thetas(self) -> ThetaSet:
        return self.block.thetas

    @property
    def rho(self) -> float:
        return self.block.rho

    def coefficients(self):
        """``A1..A4`` in the un-anchored form ``V = A1(e^{t1 x} - e^{t2 x}) + ...``."""
        raw = self.block.raw()
        return {"A1": raw["A1"], "A2": raw["A2"], "A3": raw["B2"], "A4": raw["B3"]}


def eval_f_c(params: ModelParams, rho: float, thetas: ThetaSet, x):
    """Auxiliary function whose level sets link the two thresholds.

    Evaluated after dividing numerator and denominator by ``e^{t1 x}`` so
    large ``x`` does not overflow.
    """
    t1, t2, t3, t4, t5 = thetas.as_tuple()
    x = np.asarray(x, dtype=float)
    k = params.r_bar / rho
    d = np.exp((t2 - t1) * x)
    ratio = (1.0 - d + k * (t1 - t2) * np.exp(t2 * x)) / (t1 - t2 * d)
    out = t3 * t4 * params.phi / (t3 - t5) * (ratio - k - 1.0 / t3)
    return float(out) if out.ndim == 0 else out


def eval_g_c(params: ModelParams, rho: float, thetas: ThetaSet, x, slack: float = 0.0):
    """Auxiliary function whose root is the injection threshold.

    Args:
        slack: ``f_c`` values in ``[1 - slack, 1)`` are treated as 1, so that
            domain endpoints located by a root solve stay usable.

    Raises:
        OutsideDomain: ``f_c(x) < 1 - slack``.
    """
    t1, t2, t3, t4, t5 = thetas.as_tuple()
    f = eval_f_c(params, rho, thetas, x)
    if f < 1.0 - slack:
        raise OutsideDomain(f"f_c({x}) = {f} < 1")
    f = max(f, 1.0)
    return (t4 - t5) * f ** (t3 / t4) - (t3 - t5) * f + (t3 - t4) * params.phi


def _x_star_eq(params, rho, thetas, x):
    t1, t2 = thetas.t1, thetas.t2
    return t1 - t2 + params.r_bar / rho * t1 * t2 * (math.exp(t1 * x) - math.exp(t2 * x))


def find_x_star(params: ModelParams, rho: float, thetas: ThetaSet) -> float:
    """Unique minimiser of ``f_c`` on ``(0, inf)``.

    Raises:
        BracketNotFound: no sign change up to ``1e6 / t1``.
    """
    f = lambda x: _x_star_eq(params, rho, thetas, x)
    limit = 1e6 / abs(thetas.t1)
    br = expand_bracket(f, 0.0, min(1.0 / thetas.t1, limit), limit)
    if br is None:
        raise BracketNotFound(f"no sign change for x* up to {limit}")
    return solve_bracketed(f, *br)


def kappa(thetas: ThetaSet) -> float:
    """Threshold on ``ln(phi)`` separating the two- and three-region regimes.

    Raises:
        ConditionUndefined: a log argument is not positive.
    """
    t1, t2, t3, t4, t5 = thetas.as_tuple()
    u = (t5 - t4) / t3
    v = -t4 / (t3 - t5)
    if not (u > 0 and v > 0):
        raise ConditionUndefined(f"log arguments not positive: {u}, {v}")
    return (t4 * math.log(u) + t3 * math.log(v)) / (t4 - t3)


def always_pay_condition(params: ModelParams, rho: float, thetas: ThetaSet) -> float:
    """``l_bar/rho + 1/t5``; non-positive means paying at the maximal rate everywhere is optimal."""
    return params.l_bar / rho + 1.0 / thetas.t5


def two_region_threshold(thetas: ThetaSet) -> float:
    t1, t2, t3, t4, t5 = thetas.as_tuple()
    return math.log(t4 * (t5 - t4) / (t3 * (t5 - t3))) / (t3 - t4)


def _find_x_r(params, rho, thetas, trail):
    """Root of ``g_c`` inside the domain ``{f_c >= 1}``."""
    fc = lambda x: eval_f_c(params, rho, thetas, x)
    gc = lambda x: eval_g_c(params, rho, thetas, x, slack=1e-8)
    x_star = find_x_star(params, rho, thetas)

    pieces = []
    if fc(0.0) >= 1.0:
        if fc(x_star) >= 1.0:
            pieces.append((0.0, x_star))
        else:
            pieces.append((0.0, solve_bracketed(lambda x: fc(x) - 1.0, 0.0, x_star)))
    cap = 1e3 * params.sigma ** 2 / rho
    if fc(x_star) < 1.0:
        # f_c climbs back above 1 only if its limit does
        hi = x_star
        while fc(hi) < 1.0 and hi < cap:
            hi *= 2.0
        if fc(hi) >= 1.0:
            pieces.append((solve_bracketed(lambda x: fc(x) - 1.0, x_star, hi), None))
    else:
        pieces.append((x_star, None))

    for lo, hi in pieces:
        if hi is None:
            hi = max(2.0 * lo, lo + 1.0)
            g = lambda x: gc(max(x, lo))
            br = expand_bracket(g, lo, hi, max(cap, hi))
            if br is None:
                trail.append({"bracket": [lo, cap], "result": "no sign change"})
                continue
            lo, hi = br
        try:
            return solve_bracketed(gc, lo, hi, tol_f=1e-15)
        except NoSignChange:
            trail.append({"bracket": [lo, hi], "result": "no sign change"})
    raise RootNotFound("g_c has no root on its domain", trail)


def solve_benchmark(params: ModelParams, rho: float) -> BenchmarkSolution:
    """Classify the regime and compute thresholds and coefficients.

    Raises:
        RootNotFound: three-region regime detected but ``g_c`` has no root.
        InternalInconsistency: coefficient oracle disagreement.
    """
    th = compute_thetas(params, rho)
    trail = []
    if always_pay_condition(params, rho, th) <= 0:
        case, x_r, x_l = StrategyCase.ALWAYS_PAY, 0.0, 0.0
    elif math.log(params.phi) >= kappa(th):
        case, x_r, x_l = StrategyCase.TWO_REGION, 0.0, two_region_threshold(th)
    else:
        case = StrategyCase.THREE_REGION
        x_r = _find_x_r(params, rho, th, trail)
        x_l = x_r + math.log(eval_f_c(params, rho, th, x_r)) / (-th.t4)
    block, gap = fit_block(params, th, x_r, x_l)
    closed = fit_closed_form(params, th, x_r, x_l)
    return BenchmarkSolution(case, x_r, x_l, block, closed, gap, params)


def eval_Vc(sol: BenchmarkSolution, x, order: int = 0):
    """Value function or its first two derivatives; thresholds use the right-hand formula."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    return sol.block(x, order)
