"""Monte Carlo estimates of the discounted dividend-minus-injection payoff.

Paths follow the Euler scheme of the controlled surplus and stop at the
first grid time with non-positive surplus (optionally also when a Brownian
bridge between grid points would have crossed zero).  Each path draws its
noise from a counter-based stream keyed by ``(seed, path index)``, so results
do not depend on the number of threads.

The compiled kernel is used when it was built; set
``DIVIDEND_EQ_BACKEND=python`` to force the numpy fallback.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ValidationError
from ..model import DiscountSpec, FeedbackPolicy, ModelParams, as_pseudo
from . import _pykernel

try:
    from . import _kernel as _ckernel
except ImportError:  # extension not built
    _ckernel = None

_BACKENDS = {"python": _pykernel}
if _ckernel is not None:
    _BACKENDS["compiled"] = _ckernel


def _default_backend() -> str:
    forced = os.environ.get("DIVIDEND_EQ_BACKEND")
    if forced:
        if forced not in _BACKENDS:
            raise ImportError(f"backend {forced!r} unavailable; have {sorted(_BACKENDS)}")
        return forced
    return "compiled" if "compiled" in _BACKENDS else "python"


BACKEND = _default_backend()
AVAILABLE_BACKENDS = tuple(sorted(_BACKENDS))
# paths per block in the compiled kernel; thread chunks are aligned to it
_BLOCK = 64
# finite stand-in for infinite thresholds (the kernel is built with -ffast-math)
_BIG = 1e300


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Attributes:
        dt: Euler step.
        horizon: Truncation time; ``None`` picks :func:`default_horizon`.
        n_paths: Number of paths.
        seed: 64-bit stream key.
        bridge_correction: Also test for zero crossings between grid points.
        n_threads: Worker threads; results are identical for any value.
    """

    dt: float = 1e-3
    horizon: Optional[float] = None
    n_paths: int = 10_000
    seed: int = 0
    bridge_correction: bool = False
    n_threads: int = 1

    def __post_init__(self):
        issues = []
        if not (self.dt > 0 and math.isfinite(self.dt)):
            issues.append(("NonPositiveStep", f"dt must be > 0, got {self.dt}"))
        if self.horizon is not None and not (math.isfinite(self.horizon) and self.horizon >= self.dt):
            issues.append(("HorizonTooShort", f"horizon must be finite and >= dt, got {self.horizon}"))
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            issues.append(("NoPaths", f"n_paths must be a positive integer, got {self.n_paths}"))
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            issues.append(("BadSeed", f"seed must be an unsigned 64-bit integer, got {self.seed}"))
        if self.n_threads < 1:
            issues.append(("NoThreads", f"n_threads must be >= 1, got {self.n_threads}"))
        if issues:
            raise ValidationError(issues)


@dataclass(frozen=True)
class EstimateReport:
    """Sample mean of a pathwise quantity with its standard error.

    ``part1`` and ``part2`` are the means of the two separately discounted
    accumulators; ``mean`` is exactly ``omega*part1 + (1-omega)*part2``.
    """

    mean: float
    std_error: float
    n_paths: int
    ruin_fraction: float
    part1: float
    part2: float
    omega: float
    truncation_bound: float
    horizon: float
    dt: float
    backend: str = field(default="", compare=False)

    def to_dict(self):
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "ruin_fraction": self.ruin_fraction,
            "part1_mean": self.part1,
            "part2_mean": self.part2,
            "omega": self.omega,
            "truncation_bound": self.truncation_bound,
            "horizon": self.horizon,
            "dt": self.dt,
        }


def default_horizon(l_bar: float, discount: DiscountSpec) -> float:
    """Smallest whole time whose tail mass bound ``l_bar e^{-rho T}/rho`` is below 1e-4 at the slower rate."""
    rho = as_pseudo(discount).rho1
    return float(max(1, math.ceil(math.log(1e4 * l_bar / rho) / rho)))


def truncation_bound(l_bar: float, discount: DiscountSpec, horizon: float) -> float:
    """Upper bound on the discounted dividends after ``horizon``."""
    pd = as_pseudo(discount)
    w = pd.omega
    return l_bar * (w * math.exp(-pd.rho1 * horizon) / pd.rho1 + (1 - w) * math.exp(-pd.rho2 * horizon) / pd.rho2)


def _resolve(params, discount, cfg):
    horizon = cfg.horizon if cfg.horizon is not None else default_horizon(params.l_bar, discount)
    n_steps = int(round(horizon / cfg.dt))
    pd = as_pseudo(discount)
    t = np.arange(n_steps) * cfg.dt
    disc1 = np.exp(-pd.rho1 * t)
    disc2 = disc1 if pd.rho2 == pd.rho1 else np.exp(-pd.rho2 * t)
    return horizon, n_steps, pd.omega, disc1, disc2


def _clip(v):
    return float(min(max(v, -_BIG), _BIG))


def _run(params, x1, x2, discount, x0, cfg, variants, backend=None):
    """Per-path accumulators for each variant; arrays of shape ``(n_var, n_paths)``."""
    if not (x0 > 0 and math.isfinite(x0)):
        raise ValidationError([("NonPositiveStart", f"x0 must be > 0, got {x0}")])
    backend = backend or BACKEND
    kern = _BACKENDS[backend]
    horizon, n_steps, omega, disc1, disc2 = _resolve(params, discount, cfg)
    kcfg = {
        "mu": params.mu, "sigma": params.sigma, "l_bar": params.l_bar, "r_bar": params.r_bar,
        "phi": params.phi, "x1": _clip(x1), "x2": _clip(x2), "x0": float(x0), "dt": cfg.dt,
        "n_steps": n_steps, "seed": int(cfg.seed), "bridge": bool(cfg.bridge_correction),
    }
    n = int(cfg.n_paths)
    nv = len(variants)
    out1 = np.zeros((nv, n))
    out2 = np.zeros((nv, n))
    ruined = np.zeros((nv, n), dtype=np.uint8)

    n_chunks = max(1, min(int(cfg.n_threads), -(-n // _BLOCK)))
    per = _BLOCK * math.ceil(n / (n_chunks * _BLOCK))
    bounds = [(a, min(a + per, n)) for a in range(0, n, per)]

    def work(ab):
        a, b = ab
        kern.simulate_block(kcfg, disc1, disc2, variants, a, b - a, a, out1, out2, ruined)

    if len(bounds) == 1:
        work(bounds[0])
    else:
        with ThreadPoolExecutor(max_workers=len(bounds)) as pool:
            list(pool.map(work, bounds))
    return out1, out2, ruined, horizon, omega


def _report(p1, p2, ruined, omega, params, discount, horizon, cfg, backend, bound=None):
    n = p1.shape[0]
    part1 = float(np.sum(p1) / n)
    part2 = float(np.sum(p2) / n)
    mean = omega * part1 + (1.0 - omega) * part2
    combined = omega * p1 + (1.0 - omega) * p2
    se = float(np.std(combined, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if bound is None:
        bound = truncation_bound(params.l_bar, discount, horizon)
    return EstimateReport(mean, se, n, float(np.mean(ruined)) if ruined is not None else 0.0,
                          part1, part2, omega, bound, horizon, cfg.dt, backend)


def simulate_payoff(params: ModelParams, policy: FeedbackPolicy, discount: DiscountSpec, x0: float,
                    cfg: SimConfig, backend: Optional[str] = None) -> EstimateReport:
    """Estimate the expected discounted payoff of a threshold policy from ``x0``."""
    out1, out2, ruined, horizon, omega = _run(params, policy.x1, policy.x2, discount, x0, cfg,
                                              [(0, 0.0, 0.0)], backend)
    return _report(out1[0], out2[0], ruined[0], omega, params, discount, horizon, cfg, backend or BACKEND)


def perturbation_gains(params: ModelParams, sol, x0: float, controls: Sequence[Tuple[float, float, float]],
                       cfg: SimConfig, backend: Optional[str] = None) -> Tuple[EstimateReport, List[EstimateReport]]:
    """Payoff of the equilibrium policy minus payoffs of perturbed policies.

    Every perturbation ``(l, r, eps)`` applies the constant control
    ``(l, r)`` on ``[0, eps)`` and the equilibrium policy afterwards.  All
    variants share the same normal draws per path (common random numbers).

    Returns:
        ``(baseline, gains)`` where ``gains[k]`` estimates
        ``J(equilibrium) - J(perturbation k)``.
    """
    p = sol.params if params is None else params
    variants = [(0, 0.0, 0.0)]
    for l, r, eps in controls:
        if not (0.0 <= l <= p.l_bar and 0.0 <= r <= p.r_bar):
            raise ValidationError([("ControlOutOfRange", f"(l, r) = ({l}, {r}) outside [0, l_bar] x [0, r_bar]")])
        if not eps > 0:
            raise ValidationError([("NonPositiveEpsilon", f"epsilon must be > 0, got {eps}")])
        variants.append((int(round(eps / cfg.dt)), float(l), float(r)))
    out1, out2, ruined, horizon, omega = _run(p, sol.x1, sol.x2, sol.discount, x0, cfg, variants, backend)
    bk = backend or BACKEND
    base = _report(out1[0], out2[0], ruined[0], omega, p, sol.discount, horizon, cfg, bk)
    gains = []
    for k in range(1, len(variants)):
        # both payoffs are truncated at the same horizon, so the tail bounds the difference twice over at most
        gains.append(_report(out1[0] - out1[k], out2[0] - out2[k], None, omega, p, sol.discount, horizon, cfg,
                             bk, bound=2.0 * truncation_bound(p.l_bar, sol.discount, horizon)))
    return base, gains


def perturbation_gain(params: ModelParams, sol, x0: float, l: float, r: float, epsilon: float,
                      cfg: SimConfig, backend: Optional[str] = None) -> EstimateReport:
    """``J(equilibrium) - J(perturbed)`` for a single perturbation; see :func:`perturbation_gains`."""
    return perturbation_gains(params, sol, x0, [(l, r, epsilon)], cfg, backend)[1][0]


__all__ = [
    "AVAILABLE_BACKENDS",
    "BACKEND",
    "EstimateReport",
    "SimConfig",
    "default_horizon",
    "perturbation_gain",
    "perturbation_gains",
    "simulate_payoff",
    "truncation_bound",
]
