"""Equilibrium thresholds under a two-rate (pseudo-exponential) discount kernel.

The equilibrium value splits as ``V = omega V1 + (1 - omega) V2`` where each
``Vi`` is a piecewise exponential sum for rate ``rho_i`` under the common
threshold policy.  The thresholds solve ``V'(x1) = phi`` and ``V'(x2) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from . import benchmark
from .errors import (
    BracketNotFound,
    NumericalError,
    RootNotFound,
    ValidityScanFailed,
)
from .model import (
    DiscountSpec,
    Exponential,
    FeedbackPolicy,
    ModelParams,
    PseudoExponential,
    StrategyCase,
    as_pseudo,
)
from .numerics import expand_bracket, solve_bracketed, solve_newton2d
from .piecewise import (
    HOLD,
    INJECT,
    PAY,
    REGION_NAMES,
    RateBlock,
    ThetaSet,
    compute_thetas,
    fit_block,
    fit_linear,
)

THRESHOLD_TOL = 1e-9
NEWTON_TOL = 1e-13
CONCAVITY_TOL = 1e-10
SCAN_POINTS = 10_000
# smallest threshold tried; at exactly 0 the hold region disappears
TINY = 1e-10


def rate_thetas(params: ModelParams, rho_i: float) -> ThetaSet:
    return compute_thetas(params, rho_i)


@dataclass(frozen=True)
class EquilibriumSolution:
    """Equilibrium regime, thresholds and per-rate value functions.

    Attributes:
        case: Regime tag.
        x1: Injection threshold.
        x2: Dividend threshold.
        omega: Weight on the first rate.
        blocks: Value-function blocks for ``rho1`` and ``rho2``.
        params: Model parameters.
        discount: Discount kernel the solution was computed for.
        diagnostics: Residual norms, oracle gap and solver notes.
    """

    case: StrategyCase
    x1: float
    x2: float
    omega: float
    blocks: Tuple[RateBlock, RateBlock]
    params: ModelParams
    discount: DiscountSpec
    diagnostics: Dict = field(default_factory=dict, compare=False)

    @property
    def policy(self) -> FeedbackPolicy:
        return FeedbackPolicy(self.x1, self.x2, self.params.l_bar, self.params.r_bar)

    def value_bound(self) -> float:
        lb = self.params.l_bar
        return self.omega * lb / self.blocks[0].rho + (1.0 - self.omega) * lb / self.blocks[1].rho

    def to_dict(self) -> Dict:
        """JSON-ready record; floats survive a round trip exactly."""
        d = self.discount
        if isinstance(d, Exponential):
            disc = {"type": "exponential", "rho": d.rho}
        else:
            disc = {"type": "pseudo", "omega": d.omega, "rho1": d.rho1, "rho2": d.rho2}
        blocks = []
        for b in self.blocks:
            raw = b.raw()
            blocks.append({
                "rho": b.rho,
                "thetas": list(b.thetas.as_tuple()),
                "coefficients": {
                    "A_1": raw["A1"], "A_2": raw["A2"],
                    "B_1": raw["B1"], "B_2": raw["B2"], "B_3": raw["B3"],
                },
                "anchored": list(map(float, b.anchored())),
            })
        return {
            "case": self.case.value,
            "x1": self.x1,
            "x2": self.x2,
            "params": {k: getattr(self.params, k) for k in ("mu", "sigma", "l_bar", "r_bar", "phi")},
            "discount": disc,
            "rate_blocks": blocks,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, doc: Dict) -> "EquilibriumSolution":
        params = ModelParams(**{k: float(v) for k, v in doc["params"].items()})
        disc_doc = doc["discount"]
        if disc_doc["type"] == "exponential":
            discount = Exponential(float(disc_doc["rho"]))
        else:
            discount = PseudoExponential(float(disc_doc["omega"]), float(disc_doc["rho1"]), float(disc_doc["rho2"]))
        pd = as_pseudo(discount)
        x1, x2 = float(doc["x1"]), float(doc["x2"])
        blocks = []
        for rho, bd in zip((pd.rho1, pd.rho2), doc["rate_blocks"]):
            th = compute_thetas(params, rho)
            a1, b1, a2, b2, b3 = bd["anchored"]
            blocks.append(RateBlock(rho, th, x1, x2, a1, b1, a2, b2, b3,
                                    params.phi * params.r_bar / rho, params.l_bar / rho))
        return cls(StrategyCase(doc["case"]), x1, x2, pd.omega, tuple(blocks), params, discount,
                   dict(doc.get("diagnostics", {})))


def _rates(discount: DiscountSpec):
    pd = as_pseudo(discount)
    return pd.omega, pd.rho1, pd.rho2


def coefficients_at(params: ModelParams, discount: DiscountSpec, x1: float, x2: float):
    """Rate blocks for the given thresholds and the worst closed-form/linear gap.

    Returns:
        ``((block1, block2), gap)``.

    Raises:
        SingularMatrix: smooth-fit system is singular.
        InternalInconsistency: oracle gap above tolerance.
    """
    _, r1, r2 = _rates(discount)
    b1, g1 = fit_block(params, compute_thetas(params, r1), x1, x2)
    b2, g2 = fit_block(params, compute_thetas(params, r2), x1, x2)
    return (b1, b2), max(g1, g2)


class _Fitter:
    """Caches the per-rate exponents while the threshold search runs."""

    def __init__(self, params, discount):
        self.params = params
        self.omega, r1, r2 = _rates(discount)
        self.th = (compute_thetas(params, r1), compute_thetas(params, r2))

    def blocks(self, x1, x2):
        return tuple(fit_linear(self.params, th, x1, x2) for th in self.th)

    def slope(self, blocks, x, region=HOLD):
        w = self.omega
        return w * float(blocks[0].eval_region(x, region, 1)) + (1 - w) * float(blocks[1].eval_region(x, region, 1))

    def residual(self, x1, x2):
        bl = self.blocks(x1, x2)
        return self.slope(bl, x1) - self.params.phi, self.slope(bl, x2) - 1.0

    def pay_slope_at_zero(self):
        # q - 1 with the sign flipped: V'(0) of the always-pay value
        w, lb = self.omega, self.params.l_bar
        return -(w * self.th[0].t5 * lb / self.th[0].rho + (1 - w) * self.th[1].t5 * lb / self.th[1].rho)


def threshold_residual(params: ModelParams, discount: DiscountSpec, x1: float, x2: float):
    """``(V'(x1) - phi, V'(x2) - 1)`` using the hold-region formulas."""
    if not 0.0 < x1 <= x2:
        raise ValueError(f"need 0 < x1 <= x2, got {x1}, {x2}")
    return _Fitter(params, discount).residual(x1, x2)


def always_pay_indicator(params: ModelParams, discount: DiscountSpec) -> float:
    """``q``: non-negative exactly when paying everywhere is the equilibrium."""
    return 1.0 - _Fitter(params, discount).pay_slope_at_zero()


def x_max(params: ModelParams, discount: DiscountSpec) -> float:
    _, r1, _ = _rates(discount)
    return 50.0 * max(params.sigma ** 2 / r1, (params.mu + params.l_bar + params.r_bar) / r1)


def _bracket_root(f, lo, hi0, cap, trail, label):
    """Expand ``[lo, hi]`` by doubling until ``f`` changes sign, then solve."""
    br = expand_bracket(f, lo, hi0, cap)
    if br is None:
        trail.append({"stage": label, "bracket": [lo, cap], "result": "no sign change"})
        raise BracketNotFound(f"{label}: no sign change on [{lo}, {cap}]", trail)
    trail.append({"stage": label, "bracket": list(br), "result": "bracketed"})
    return solve_bracketed(f, *br, tol_f=1e-15)


def validity_scan(sol: "EquilibriumSolution", n: int = SCAN_POINTS, tol: float = CONCAVITY_TOL):
    """Check ``V' > 0`` and ``V'' <= tol`` on a grid over ``(0, x2 + 20/|t5|)``.

    Returns:
        ``(ok, worst_second_derivative, min_first_derivative)``.
    """
    t5 = sol.blocks[0].thetas.t5
    hi = sol.x2 + 20.0 / abs(t5)
    x = np.linspace(0.0, hi, n + 1)[1:]
    d1 = eval_V(sol, x, 1)
    d2 = eval_V(sol, x, 2)
    worst2 = float(np.max(d2))
    min1 = float(np.min(d1))
    return (min1 > 0 and worst2 <= tol), worst2, min1


def _assemble(params, discount, case, x1, x2, diagnostics) -> EquilibriumSolution:
    blocks, gap = coefficients_at(params, discount, x1, x2)
    omega, _, _ = _rates(discount)
    diagnostics = dict(diagnostics)
    diagnostics["oracle_gap"] = gap
    sol = EquilibriumSolution(case, float(x1), float(x2), omega, blocks, params, discount, diagnostics)
    res = []
    if x2 > 0:
        res.append(eval_V(sol, x2, 1) - 1.0)
        if x1 > 0:
            res.append(eval_V(sol, x1, 1) - params.phi)
    diagnostics["residuals"] = [float(r) for r in res]
    ok, worst2, min1 = validity_scan(sol)
    diagnostics["validity"] = {"passed": bool(ok), "max_second_derivative": worst2, "min_first_derivative": min1}
    return sol


def _from_benchmark(params, discount, force_note=""):
    omega, r1, r2 = _rates(discount)
    rate = r1 if (omega == 1.0 or r1 == r2) else r2
    bsol = benchmark.solve_benchmark(params, rate)
    diag = {"method": "exponential benchmark", "benchmark_rate": rate, "benchmark_oracle_gap": bsol.oracle_gap}
    return _assemble(params, discount, bsol.case, bsol.x_r, bsol.x_l, diag)


def solve_equilibrium(params: ModelParams, discount: DiscountSpec, force_general: bool = False) -> EquilibriumSolution:
    """Classify the equilibrium regime and compute its thresholds.

    Args:
        params: Validated model parameters.
        discount: Exponential or two-rate kernel.
        force_general: Skip the delegation of time-consistent kernels to the
            exponential solver; used to cross-check the two code paths.

    Raises:
        RootNotFound: no admissible threshold pair; ``trail`` lists attempts.
        ValidityScanFailed: every root found violates monotonicity/concavity.
    """
    pd = as_pseudo(discount)
    if pd.is_time_consistent and not force_general:
        return _from_benchmark(params, discount)

    fit = _Fitter(params, discount)
    trail = []
    q = 1.0 - fit.pay_slope_at_zero()
    diag = {"method": "general", "q": q}
    if q >= 0:
        return _assemble(params, discount, StrategyCase.ALWAYS_PAY, 0.0, 0.0, diag)

    cap0 = x_max(params, discount)
    two_slope = lambda x2: fit.slope(fit.blocks(0.0, x2), x2) - 1.0
    x2_0 = None
    cap = cap0
    for _ in range(11):
        try:
            x2_0 = _bracket_root(two_slope, TINY, min(1.0, cap), cap, trail, "x2 with x1 = 0")
            break
        except BracketNotFound:
            cap *= 2.0
    if x2_0 is None:
        raise RootNotFound("no dividend threshold with x1 = 0", trail)
    slope0 = fit.slope(fit.blocks(0.0, x2_0), 0.0)
    diag["x2_two_region"] = x2_0
    diag["slope_at_zero_two_region"] = slope0

    if slope0 <= params.phi:
        sol = _assemble(params, discount, StrategyCase.TWO_REGION, 0.0, x2_0, diag)
        if not sol.diagnostics["validity"]["passed"]:
            raise ValidityScanFailed("two-region solution is not increasing and concave", trail)
        return sol

    collapsed = lambda t: fit.slope(fit.blocks(t, t), t) - 1.0
    t_star = None
    try:
        t_star = _bracket_root(collapsed, TINY, max(x2_0, 1e-3), cap, trail, "collapsed x1 = x2")
    except BracketNotFound:
        pass

    if params.phi == 1.0:
        if t_star is None:
            raise RootNotFound("no collapsed threshold for phi = 1", trail)
        diag["method"] = "collapsed single-unknown solve"
        sol = _assemble(params, discount, StrategyCase.THREE_REGION, t_star, t_star, diag)
        if not sol.diagnostics["validity"]["passed"]:
            raise ValidityScanFailed("collapsed solution is not increasing and concave", trail)
        return sol

    candidates = []
    box = lambda a, b: 0.0 < a <= b <= cap
    try:
        x1, x2 = solve_newton2d(fit.residual, (0.5 * x2_0, x2_0), tol_f=NEWTON_TOL, box=box)
        trail.append({"stage": "newton", "start": [0.5 * x2_0, x2_0], "result": [x1, x2]})
        candidates.append(("newton", x1, x2))
    except NumericalError as exc:
        trail.append({"stage": "newton", "start": [0.5 * x2_0, x2_0], "result": type(exc).__name__})

    def nested():
        def inner(a):
            f = lambda b: fit.slope(fit.blocks(a, b), b) - 1.0
            return _bracket_root(f, a, max(2.0 * a, a + 1e-3), cap, [], "inner x2")

        def outer(a):
            if a == 0.0:
                return slope0 - params.phi
            b = inner(a)
            return fit.slope(fit.blocks(a, b), a) - params.phi

        hi = t_star if t_star is not None else x2_0
        a = solve_bracketed(outer, 0.0, hi, tol_f=1e-14)
        return a, inner(a)

    rejected = 0
    for attempt in range(2):
        if attempt == 1:
            try:
                x1, x2 = nested()
                trail.append({"stage": "nested", "result": [x1, x2]})
                candidates.append(("nested", x1, x2))
            except NumericalError as exc:
                trail.append({"stage": "nested", "result": type(exc).__name__})
        while candidates:
            method, x1, x2 = candidates.pop(0)
            r = fit.residual(x1, x2)
            if not (0.0 < x1 <= x2 and max(abs(r[0]), abs(r[1])) <= THRESHOLD_TOL):
                trail.append({"stage": method, "rejected": "residual", "residual": list(r)})
                continue
            diag["method"] = method
            sol = _assemble(params, discount, StrategyCase.THREE_REGION, x1, x2, diag)
            if sol.diagnostics["validity"]["passed"]:
                sol.diagnostics["trail"] = trail
                return sol
            rejected += 1
            trail.append({"stage": method, "rejected": "validity scan", "x": [x1, x2]})
    if rejected:
        raise ValidityScanFailed("threshold roots found but none is increasing and concave", trail)
    raise RootNotFound("no admissible threshold pair found", trail)


def eval_V(sol: EquilibriumSolution, x, order: int = 0, component: str = "weighted"):
    """Value function (or derivative) of the equilibrium.

    Args:
        component: ``"weighted"``, ``"V1"`` or ``"V2"``.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if component == "V1":
        return sol.blocks[0](x, order)
    if component == "V2":
        return sol.blocks[1](x, order)
    if component != "weighted":
        raise ValueError(f"unknown component {component!r}")
    w = sol.omega
    if w == 1.0:
        return sol.blocks[0](x, order)
    if w == 0.0:
        return sol.blocks[1](x, order)
    return w * sol.blocks[0](x, order) + (1.0 - w) * sol.blocks[1](x, order)


def region_of(sol: EquilibriumSolution, x):
    return sol.blocks[0].region(x)


def hjb_residual(sol: EquilibriumSolution, x, return_gap: bool = False):
    """Residual of the weighted equilibrium equation under the solution's own control.

    ``0.5 s^2 V'' + (mu - l + r) V' + (l - phi r) - (omega rho1 V1 + (1-omega) rho2 V2)``

    With ``return_gap`` also returns, per point, how much the best corner
    control beats the prescribed one in ``(mu - l + r) V' + (l - phi r)``.
    Non-positive gaps mean the prescribed control attains the supremum.
    """
    p = sol.params
    x = np.asarray(x, dtype=float)
    reg = region_of(sol, x)
    l = np.where(reg == PAY, p.l_bar, 0.0)
    r = np.where(reg == INJECT, p.r_bar, 0.0)
    b1, b2 = sol.blocks
    w = sol.omega
    d1 = eval_V(sol, x, 1)
    d2 = eval_V(sol, x, 2)
    disc = w * b1.rho * b1(x, 0) + (1 - w) * b2.rho * b2(x, 0)
    attained = (p.mu - l + r) * d1 + (l - p.phi * r)
    res = 0.5 * p.sigma ** 2 * d2 + attained - disc
    if not return_gap:
        return res
    best = np.max(np.stack([(p.mu - cl + cr) * d1 + (cl - p.phi * cr)
                            for cl in (0.0, p.l_bar) for cr in (0.0, p.r_bar)]), axis=0)
    return res, best - attained


def auxiliary_g(sol: EquilibriumSolution, x, lag: float):
    """``omega e^{-rho1 lag} V1(x) + (1-omega) e^{-rho2 lag} V2(x)``."""
    if lag < 0:
        raise ValueError("lag must be non-negative")
    b1, b2 = sol.blocks
    w = sol.omega
    return w * math.exp(-b1.rho * lag) * b1(x) + (1 - w) * math.exp(-b2.rho * lag) * b2(x)


def region_name(sol: EquilibriumSolution, x: float) -> str:
    return REGION_NAMES[int(region_of(sol, x))]
