"""Characteristic roots and three-region exponential-sum value functions.

A value function for a single discount rate ``rho`` under the threshold
policy ``(x1, x2)`` solves a linear second-order ODE on each region:

* inject ``[0, x1)``:  ``-c + A1 e^{t1 x} + B1 e^{t2 x}`` with ``c = phi r_bar / rho``
* hold ``[x1, x2)``:   ``A2 e^{t3 x} + B2 e^{t4 x}``
* pay ``[x2, inf)``:    ``l_bar/rho + B3 e^{t5 x}``

Raw coefficients overflow quickly for large thresholds, so they are stored
anchored at the nearest threshold:

* inject: ``-c + a1 e^{t1 (x - x1)} + b1 e^{t2 x}``
* hold:   ``a2 e^{t3 (x - x2)} + b2 e^{t4 (x - x1)}``
* pay:    ``l_bar/rho + b3 e^{t5 (x - x2)}``

Every exponent is then non-positive inside its own region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .errors import InternalInconsistency
from .model import ModelParams
from .numerics import solve_dense

INJECT, HOLD, PAY = 0, 1, 2
REGION_NAMES = ("inject", "hold", "pay")
ORACLE_GAP_LIMIT = 1e-6


def char_root_pair(z: float, sigma: float, rho: float):
    """Roots ``(plus, minus)`` of ``0.5 sigma^2 t^2 + z t - rho = 0``.

    Uses the cancellation-free form: the root sharing the sign of ``-z`` is
    computed directly and the other from the product ``-2 rho / sigma^2``.
    """
    s2 = sigma * sigma
    s = math.sqrt(z * z + 2.0 * rho * s2)
    if z >= 0:
        minus = -(z + s) / s2
        plus = 2.0 * rho / (z + s)
    else:
        plus = (s - z) / s2
        minus = -2.0 * rho / (s - z)
    return plus, minus


@dataclass(frozen=True)
class ThetaSet:
    """Exponents for one discount rate.

    ``t1, t2`` belong to drift ``mu + r_bar``, ``t3, t4`` to ``mu`` and
    ``t5`` to ``mu - l_bar`` (the negative root only).
    """

    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    rho: float

    def as_tuple(self):
        return (self.t1, self.t2, self.t3, self.t4, self.t5)


def compute_thetas(params: ModelParams, rho: float) -> ThetaSet:
    sig = params.sigma
    t1, t2 = char_root_pair(params.mu + params.r_bar, sig, rho)
    t3, t4 = char_root_pair(params.mu, sig, rho)
    _, t5 = char_root_pair(params.mu - params.l_bar, sig, rho)
    return ThetaSet(t1, t2, t3, t4, t5, rho)


@dataclass(frozen=True)
class RateBlock:
    """Value function for one discount rate under thresholds ``(x1, x2)``.

    Attributes:
        rho: Discount rate.
        thetas: Exponents for ``rho``.
        x1: Injection threshold.
        x2: Dividend threshold.
        a1, b1, a2, b2, b3: Anchored coefficients (see module docstring).
            ``a1, b1`` are meaningless when ``x1 == 0`` and ``a2, b2`` when
            ``x1 == x2 == 0``; they are stored as 0 then.
        c: ``phi * r_bar / rho``.
        lr: ``l_bar / rho``.
    """

    rho: float
    thetas: ThetaSet
    x1: float
    x2: float
    a1: float
    b1: float
    a2: float
    b2: float
    b3: float
    c: float
    lr: float

    def raw(self) -> Dict[str, Optional[float]]:
        """Coefficients of the un-anchored exponentials, ``None`` when the region is empty."""
        t = self.thetas
        out: Dict[str, Optional[float]] = {"A1": None, "B1": None, "A2": None, "B2": None, "B3": None}
        if self.x1 > 0:
            out["A1"] = self.a1 * math.exp(-t.t1 * self.x1)
            out["B1"] = self.b1
        if self.x2 > 0:
            out["A2"] = self.a2 * math.exp(-t.t3 * self.x2)
            out["B2"] = self.b2 * math.exp(-t.t4 * self.x1)
        out["B3"] = self.b3 * math.exp(-t.t5 * self.x2)
        return out

    def anchored(self):
        return np.array([self.a1, self.b1, self.a2, self.b2, self.b3])

    def region(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.x1, INJECT, np.where(x < self.x2, HOLD, PAY))

    def eval_region(self, x, region: int, order: int = 0):
        """Evaluate one region's formula at ``x`` regardless of membership."""
        t = self.thetas
        x = np.asarray(x, dtype=float)
        if region == INJECT:
            e1 = self.a1 * t.t1 ** order * np.exp(t.t1 * (x - self.x1))
            e2 = self.b1 * t.t2 ** order * np.exp(t.t2 * x)
            return e1 + e2 - (self.c if order == 0 else 0.0)
        if region == HOLD:
            e3 = self.a2 * t.t3 ** order * np.exp(t.t3 * (x - self.x2))
            e4 = self.b2 * t.t4 ** order * np.exp(t.t4 * (x - self.x1))
            return e3 + e4
        e5 = self.b3 * t.t5 ** order * np.exp(t.t5 * (x - self.x2))
        return e5 + (self.lr if order == 0 else 0.0)

    def __call__(self, x, order: int = 0):
        """Evaluate ``V``, ``V'`` or ``V''`` piecewise; boundaries use the right-hand formula."""
        x = np.asarray(x, dtype=float)
        reg = self.region(x)
        out = np.empty_like(x)
        for k in (INJECT, HOLD, PAY):
            mask = reg == k
            if np.any(mask):
                out[mask] = self.eval_region(x[mask], k, order)
        return float(out) if out.ndim == 0 else out


def _blank(params: ModelParams, thetas: ThetaSet, x1, x2, a1=0.0, b1=0.0, a2=0.0, b2=0.0, b3=0.0):
    rho = thetas.rho
    return RateBlock(rho, thetas, float(x1), float(x2), float(a1), float(b1), float(a2), float(b2), float(b3),
                     params.phi * params.r_bar / rho, params.l_bar / rho)


def fit_linear(params: ModelParams, thetas: ThetaSet, x1: float, x2: float) -> RateBlock:
    """Coefficients from the smooth-fit conditions, solved as a dense system.

    Conditions: ``V(0) = 0`` and continuity of ``V`` and ``V'`` at every
    nonempty threshold.  ``x1 == 0`` drops the inject region; ``x2 == 0``
    leaves only the pay region.
    """
    if not 0.0 <= x1 <= x2:
        raise ValueError(f"need 0 <= x1 <= x2, got {x1}, {x2}")
    rho = thetas.rho
    lr = params.l_bar / rho
    t1, t2, t3, t4, t5 = thetas.as_tuple()

    if x2 == 0.0:
        return _blank(params, thetas, 0.0, 0.0, b3=-lr)

    e4 = math.exp(t4 * (x2 - x1))
    if x1 == 0.0:
        # unknowns a2, b2, b3
        A = [[math.exp(-t3 * x2), 1.0, 0.0],
             [1.0, e4, -1.0],
             [t3, t4 * e4, -t5]]
        a2, b2, b3 = solve_dense(A, [0.0, lr, 0.0])
        return _blank(params, thetas, 0.0, x2, a2=a2, b2=b2, b3=b3)

    c = params.phi * params.r_bar / rho
    e1 = math.exp(-t1 * x1)
    e2 = math.exp(t2 * x1)
    e3 = math.exp(t3 * (x1 - x2))
    A = [[e1, 1.0, 0.0, 0.0, 0.0],
         [1.0, e2, -e3, -1.0, 0.0],
         [t1, t2 * e2, -t3 * e3, -t4, 0.0],
         [0.0, 0.0, 1.0, e4, -1.0],
         [0.0, 0.0, t3, t4 * e4, -t5]]
    a1, b1, a2, b2, b3 = solve_dense(A, [c, c, 0.0, lr, 0.0])
    return _blank(params, thetas, x1, x2, a1, b1, a2, b2, b3)


def _scaled_sum(terms, shift):
    """``sum(k * exp(e - shift))`` over ``(k, e)`` pairs."""
    return math.fsum(k * math.exp(e - shift) for k, e in terms)


def fit_closed_form(params: ModelParams, thetas: ThetaSet, x1: float, x2: float) -> RateBlock:
    """Coefficients from the explicit solution of the smooth-fit system.

    Every numerator and the common denominator are sums of weighted
    exponentials; all are scaled by the largest denominator exponent before
    exponentiation so that the ratios stay finite for large thresholds.
    """
    rho = thetas.rho
    lb, rb, phi = params.l_bar, params.r_bar, params.phi
    lr = lb / rho
    t1, t2, t3, t4, t5 = thetas.as_tuple()

    if x2 == 0.0:
        return _blank(params, thetas, 0.0, 0.0, b3=-lr)

    if x1 == 0.0:
        r = math.exp((t4 - t3) * x2)
        den = (t5 - t4) * r + (t3 - t5)
        a2 = -t5 * lr / den
        b3 = -(t3 - t4 * r) * lr / den
        # a2 e^{-t3 x2} + b2 = 0
        return _blank(params, thetas, 0.0, x2, a2=a2, b2=-a2 * math.exp(-t3 * x2), b3=b3)

    X1, X2 = x1, x2
    E = [((t3 - t1) * (t4 - t5), (t1 + t3) * X1 + t4 * X2),
         ((t1 - t4) * (t3 - t5), (t1 + t4) * X1 + t3 * X2),
         ((t2 - t3) * (t4 - t5), (t2 + t3) * X1 + t4 * X2),
         ((t4 - t2) * (t3 - t5), (t2 + t4) * X1 + t3 * X2)]
    C1 = [(t5 * (t3 - t4), (t3 + t4) * X1)]
    C2 = [(t5 * (t1 - t4), (t1 + t4) * X1), (t5 * (t4 - t2), (t2 + t4) * X1)]
    C4 = [(t5 * (t1 - t3), (t1 + t3) * X1), (t5 * (t3 - t2), (t2 + t3) * X1)]
    C5 = [(t3 * (t1 - t4), (t1 + t4) * X1 + t3 * X2),
          (t4 * (t3 - t1), (t1 + t3) * X1 + t4 * X2),
          (t3 * (t4 - t2), (t2 + t4) * X1 + t3 * X2),
          (t4 * (t2 - t3), (t2 + t3) * X1 + t4 * X2)]
    D1 = [(t3 * (t5 - t4), t3 * X1 + t4 * X2),
          (t4 * (t3 - t5), t4 * X1 + t3 * X2),
          ((t3 - t2) * (t4 - t5), (t2 + t3) * X1 + t4 * X2),
          ((t2 - t4) * (t3 - t5), (t2 + t4) * X1 + t3 * X2)]
    D2 = [(t1 * (t5 - t4), t1 * X1 + t4 * X2),
          (t2 * (t4 - t5), t2 * X1 + t4 * X2),
          ((t1 - t2) * (t4 - t5), (t1 + t2) * X1 + t4 * X2)]
    D3 = [(t3 * (t5 - t4), t3 * X1 + t4 * X2),
          (t4 * (t3 - t5), t4 * X1 + t3 * X2),
          ((t3 - t1) * (t4 - t5), (t1 + t3) * X1 + t4 * X2),
          ((t1 - t4) * (t3 - t5), (t1 + t4) * X1 + t3 * X2)]
    D4 = [(t1 * (t5 - t3), t1 * X1 + t3 * X2),
          (t2 * (t3 - t5), t2 * X1 + t3 * X2),
          ((t1 - t2) * (t3 - t5), (t1 + t2) * X1 + t3 * X2)]
    D5 = [(t1 * (t3 - t4), t1 * X1 + (t3 + t4) * X2),
          (t2 * (t4 - t3), t2 * X1 + (t3 + t4) * X2),
          ((t1 - t2) * (t4 - t3), (t1 + t2) * X1 + (t3 + t4) * X2)]

    shift = max(e for _, e in E)
    den = rho * _scaled_sum(E, shift)

    def coef(C, D, anchor):
        # anchor: exponent folded into the coefficient so it multiplies a bounded exponential
        s = shift - anchor
        return (lb * _scaled_sum(C, s) + phi * rb * _scaled_sum(D, s)) / den

    a1 = -coef(C1, D1, t1 * X1)
    b1 = coef(C1, D3, 0.0)
    a2 = -coef(C2, D2, t3 * X2)
    b2 = coef(C4, D4, t4 * X1)
    b3 = -coef(C5, D5, 0.0)
    return _blank(params, thetas, x1, x2, a1, b1, a2, b2, b3)


def coefficient_gap(p: RateBlock, q: RateBlock) -> float:
    """Largest relative difference between two anchored coefficient sets."""
    u, v = p.anchored(), q.anchored()
    scale = np.maximum(np.abs(u), np.abs(v))
    diff = np.abs(u - v)
    mask = scale > 0
    return float(np.max(diff[mask] / scale[mask])) if np.any(mask) else 0.0


def fit_block(params: ModelParams, thetas: ThetaSet, x1: float, x2: float, limit: float = ORACLE_GAP_LIMIT):
    """Production coefficients plus the gap to the closed-form oracle.

    Returns:
        ``(block, gap)`` where ``block`` comes from the dense solve.

    Raises:
        InternalInconsistency: the gap exceeds ``limit``.
    """
    lin = fit_linear(params, thetas, x1, x2)
    closed = fit_closed_form(params, thetas, x1, x2)
    gap = coefficient_gap(lin, closed)
    if not gap <= limit:
        raise InternalInconsistency(
            f"closed-form and linear-solve coefficients differ by {gap:.3e} at rho={thetas.rho}, x1={x1}, x2={x2}")
    return lin, gap


def ode_residual(params: ModelParams, block: RateBlock, x) -> np.ndarray:
    """Residual of ``0.5 s^2 V'' + (mu - l + r) V' + (l - phi r) - rho V`` under the block's own policy."""
    x = np.asarray(x, dtype=float)
    reg = block.region(x)
    l = np.where(reg == PAY, params.l_bar, 0.0)
    r = np.where(reg == INJECT, params.r_bar, 0.0)
    v0, v1, v2 = block(x, 0), block(x, 1), block(x, 2)
    return 0.5 * params.sigma ** 2 * v2 + (params.mu - l + r) * v1 + (l - params.phi * r) - block.rho * v0
