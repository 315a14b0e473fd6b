"""Domain types shared by the solvers, the simulator and the CLI."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ModelParams:
    """Surplus dynamics and control bounds.

    Attributes:
        mu: Drift of the uncontrolled surplus.
        sigma: Volatility.
        l_bar: Maximal dividend rate.
        r_bar: Maximal capital injection rate.
        phi: Proportional cost of injected capital.
    """

    mu: float
    sigma: float
    l_bar: float
    r_bar: float
    phi: float

    def replace(self, **changes) -> "ModelParams":
        fields = {k: getattr(self, k) for k in ("mu", "sigma", "l_bar", "r_bar", "phi")}
        fields.update(changes)
        return ModelParams(**fields)


def validate_params(raw: Union[ModelParams, Mapping[str, float]], relaxed: bool = False) -> ModelParams:
    """Check every constraint on the model parameters.

    ``relaxed`` admits ``phi == 1`` (costless injection); ``phi < 1`` is
    always rejected.  All violations are collected before raising.

    Raises:
        ValidationError: listing every violated constraint.
    """
    if isinstance(raw, ModelParams):
        values = {k: raw.__dict__[k] for k in ("mu", "sigma", "l_bar", "r_bar", "phi")}
    else:
        values = dict(raw)

    issues = []
    for key in ("mu", "sigma", "l_bar", "r_bar", "phi"):
        if key not in values:
            issues.append(("MissingField", f"{key} is required"))
            continue
        try:
            values[key] = float(values[key])
        except (TypeError, ValueError):
            issues.append(("NotANumber", f"{key} must be a number, got {values[key]!r}"))
            continue
        if not math.isfinite(values[key]):
            issues.append(("NotFinite", f"{key} must be finite, got {values[key]}"))
    if issues:
        raise ValidationError(issues)

    if values["sigma"] <= 0:
        issues.append(("NonPositiveSigma", f"sigma must be > 0, got {values['sigma']}"))
    if values["mu"] <= 0:
        issues.append(("NonPositiveMu", f"mu must be > 0, got {values['mu']}"))
    for key in ("l_bar", "r_bar"):
        if values[key] <= 0:
            issues.append(("NonPositiveBound", f"{key} must be > 0, got {values[key]}"))
    phi = values["phi"]
    if phi < 1 or (phi == 1 and not relaxed):
        issues.append(("CostNotAboveOne", f"phi must be > 1, got {phi}"))
    if issues:
        raise ValidationError(issues)
    return ModelParams(**{k: values[k] for k in ("mu", "sigma", "l_bar", "r_bar", "phi")})


@dataclass(frozen=True)
class Exponential:
    rho: float

    def __post_init__(self):
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValidationError([("NonPositiveRate", f"rho must be > 0, got {self.rho}")])


@dataclass(frozen=True)
class PseudoExponential:
    """Weighted mixture ``omega*exp(-rho1 t) + (1-omega)*exp(-rho2 t)`` with rho1 <= rho2."""

    omega: float
    rho1: float
    rho2: float

    def __post_init__(self):
        issues = []
        if not (0.0 <= self.omega <= 1.0):
            issues.append(("WeightOutOfRange", f"omega must lie in [0, 1], got {self.omega}"))
        for name in ("rho1", "rho2"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                issues.append(("NonPositiveRate", f"{name} must be > 0, got {value}"))
        if not issues and self.rho1 > self.rho2:
            issues.append(("RatesUnordered", f"need rho1 <= rho2, got {self.rho1} > {self.rho2}"))
        if issues:
            raise ValidationError(issues)

    @property
    def is_time_consistent(self) -> bool:
        return self.omega in (0.0, 1.0) or self.rho1 == self.rho2

    def equivalent_rate(self) -> float:
        """Rate of the exponential kernel this mixture collapses to (only if time-consistent)."""
        if self.omega == 1.0 or self.rho1 == self.rho2:
            return self.rho1
        if self.omega == 0.0:
            return self.rho2
        raise ValueError("kernel is not exponential")


DiscountSpec = Union[Exponential, PseudoExponential]


def as_pseudo(spec: DiscountSpec) -> PseudoExponential:
    """View any kernel as a two-rate mixture (exponential -> omega=1, rho1=rho2=rho)."""
    if isinstance(spec, Exponential):
        return PseudoExponential(1.0, spec.rho, spec.rho)
    return spec


def discount_factor(spec: DiscountSpec, t):
    """Discount weight of a cash flow ``t`` time units ahead.  Accepts arrays."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    if isinstance(spec, Exponential):
        out = np.exp(-spec.rho * t)
    else:
        out = spec.omega * np.exp(-spec.rho1 * t) + (1.0 - spec.omega) * np.exp(-spec.rho2 * t)
    return float(out) if out.ndim == 0 else out


class StrategyCase(str, enum.Enum):
    THREE_REGION = "three_region"
    TWO_REGION = "two_region"
    ALWAYS_PAY = "always_pay"


@dataclass(frozen=True)
class FeedbackPolicy:
    """Threshold control: inject below ``x1``, pay dividends from ``x2`` on."""

    x1: float
    x2: float
    l_bar: float
    r_bar: float

    def __post_init__(self):
        if not (0.0 <= self.x1 <= self.x2):
            raise ValidationError([("ThresholdsUnordered", f"need 0 <= x1 <= x2, got {self.x1}, {self.x2}")])

    def action(self, x):
        """Return ``(l, r)`` for surplus ``x``; vectorised over arrays."""
        x = np.asarray(x, dtype=float)
        l = np.where(x >= self.x2, self.l_bar, 0.0)
        r = np.where(x < self.x1, self.r_bar, 0.0)
        if x.ndim == 0:
            return float(l), float(r)
        return l, r


def policy_action(p: FeedbackPolicy, x: float):
    if not x > 0:
        raise ValueError("surplus must be positive")
    return p.action(x)
