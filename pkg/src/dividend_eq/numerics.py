"""Scalar root finding, 2-D Newton and small dense linear solves.

Everything here is deterministic: identical inputs give bitwise identical
outputs.  The routines are small enough that owning them is cheaper than
adapting library tolerances to the contracts below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    Diverged,
    MaxIterExceeded,
    NoSignChange,
    SingularJacobian,
    SingularMatrix,
)

TOL_X = 1e-12
TOL_F = 1e-10
MAX_ITER = 200


@dataclass(frozen=True)
class RootResult:
    root: float
    f_root: float
    iterations: int
    bracket: Tuple[float, float]


def solve_bracketed(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol_x: float = TOL_X,
    tol_f: float = TOL_F,
    max_iter: int = MAX_ITER,
    full_output: bool = False,
):
    """Brent's method on a sign-changing bracket.

    Stops when ``|f(x)| <= tol_f`` or the bracket is narrower than ``tol_x``.

    Args:
        f: Continuous scalar function.
        lo: Left end of the bracket.
        hi: Right end, ``hi > lo``.
        tol_x: Bracket-width tolerance.
        tol_f: Residual tolerance.
        max_iter: Iteration cap.
        full_output: Return a :class:`RootResult` instead of the bare root.

    Raises:
        NoSignChange: ``f(lo)`` and ``f(hi)`` share a strict sign.
        MaxIterExceeded: no convergence within ``max_iter`` steps.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if tol_x <= 0 or tol_f <= 0:
        raise ValueError("tolerances must be positive")

    a, b = float(lo), float(hi)
    fa, fb = float(f(a)), float(f(b))

    def done(x, fx, it):
        return RootResult(x, fx, it, (lo, hi)) if full_output else x

    if fa == 0.0:
        return done(a, fa, 0)
    if fb == 0.0:
        return done(b, fb, 0)
    if math.isnan(fa) or math.isnan(fb) or (fa > 0) == (fb > 0):
        raise NoSignChange(f"f({a})={fa}, f({b})={fb} on [{lo}, {hi}]")

    c, fc = a, fa
    d = e = b - a
    for it in range(1, max_iter + 1):
        if (fb > 0) == (fc > 0):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol = 2.0 * 2.220446049250313e-16 * abs(b) + 0.5 * tol_x
        m = 0.5 * (c - b)
        if abs(fb) <= tol_f or abs(m) <= tol or fb == 0.0:
            return done(b, fb, it)
        if abs(e) >= tol and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p, q = 2.0 * m * s, 1.0 - s
            else:
                q, r = fa / fc, fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            else:
                p = -p
            if 2.0 * p < min(3.0 * m * q - abs(tol * q), abs(e * q)):
                e, d = d, p / q
            else:
                d = e = m
        else:
            d = e = m
        a, fa = b, fb
        b = b + (d if abs(d) > tol else math.copysign(tol, m))
        fb = float(f(b))
        if math.isnan(fb):
            raise NoSignChange(f"f returned NaN at {b}")
    raise MaxIterExceeded(f"bracketed solve did not converge in {max_iter} iterations")


def expand_bracket(f, lo: float, hi: float, limit: float, factor: float = 2.0):
    """Grow ``hi`` geometrically until ``f`` changes sign on ``[lo, hi]``.

    Returns the bracket or ``None`` once ``hi`` would exceed ``limit``.
    """
    flo = f(lo)
    while True:
        fhi = f(hi)
        if (flo > 0) != (fhi > 0) or fhi == 0:
            return lo, hi
        if hi >= limit:
            return None
        hi = min(hi * factor, limit)


def solve_newton2d(
    F: Callable[[float, float], Sequence[float]],
    start: Tuple[float, float],
    tol_f: float = TOL_F,
    max_iter: int = MAX_ITER,
    box: Optional[Callable[[float, float], bool]] = None,
    min_damping: float = 2.0 ** -20,
):
    """Damped Newton iteration for two equations in two unknowns.

    The Jacobian is approximated by central differences with step
    ``max(1e-7, 1e-7*|x|)``, one-sided where a probe would leave ``box``.
    Each step is halved until the residual norm decreases or the damping
    reaches ``min_damping``.

    Args:
        F: Map returning two residual components.
        start: Initial iterate.
        tol_f: Convergence threshold on the max-norm of ``F``.
        max_iter: Iteration cap.
        box: Optional admissibility predicate; iterates outside it raise.

    Raises:
        SingularJacobian: finite-difference Jacobian is numerically singular.
        Diverged: an accepted iterate left ``box``.
        MaxIterExceeded: no convergence within ``max_iter``.
    """
    x = np.array(start, dtype=float)

    def ev(v):
        out = np.asarray(F(float(v[0]), float(v[1])), dtype=float)
        if out.shape != (2,):
            raise ValueError("F must return two components")
        return out

    def inside(v):
        return box is None or box(float(v[0]), float(v[1]))

    if not inside(x):
        raise Diverged(f"start {tuple(x)} outside admissible box")
    fx = ev(x)
    norm = np.max(np.abs(fx))
    for _ in range(max_iter):
        if norm <= tol_f:
            return float(x[0]), float(x[1])
        J = np.empty((2, 2))
        for j in range(2):
            h = max(1e-7, 1e-7 * abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            # one-sided near the edge of the box so F is only probed where it is defined
            if not inside(xm):
                J[:, j] = (ev(xp) - fx) / h
            elif not inside(xp):
                J[:, j] = (fx - ev(xm)) / h
            else:
                J[:, j] = (ev(xp) - ev(xm)) / (2.0 * h)
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        scale = np.max(np.abs(J)) ** 2
        if not np.isfinite(det) or scale == 0 or abs(det) <= 1e-14 * scale:
            raise SingularJacobian(f"singular Jacobian at {tuple(x)}")
        step = -np.array([J[1, 1] * fx[0] - J[0, 1] * fx[1], -J[1, 0] * fx[0] + J[0, 0] * fx[1]]) / det

        lam = 1.0
        while True:
            trial = x + lam * step
            if inside(trial):
                try:
                    ft = ev(trial)
                except (ArithmeticError, ValueError):
                    ft = None
                if ft is not None and np.all(np.isfinite(ft)):
                    tnorm = np.max(np.abs(ft))
                    if tnorm < norm:
                        break
            lam *= 0.5
            if lam < min_damping:
                if not inside(trial):
                    raise Diverged(f"Newton step left the admissible box near {tuple(x)}")
                raise MaxIterExceeded(f"line search stalled at {tuple(x)} with |F|={norm:.3e}")
        x, fx, norm = trial, ft, tnorm
    if norm <= tol_f:
        return float(x[0]), float(x[1])
    raise MaxIterExceeded(f"Newton did not converge in {max_iter} iterations, |F|={norm:.3e}")


def solve_dense(A, b, pivot_tol: float = 1e-14):
    """Solve ``A x = b`` for a small square system.

    Rows and columns are scaled by their largest magnitude before an LU
    factorisation with partial pivoting; one step of iterative refinement
    follows.

    Raises:
        SingularMatrix: a pivot falls below ``pivot_tol`` after equilibration.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError("A must be square and match b")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise SingularMatrix("non-finite entries")

    row = np.max(np.abs(A), axis=1)
    if np.any(row == 0):
        raise SingularMatrix("zero row")
    As = A / row[:, None]
    col = np.max(np.abs(As), axis=0)
    if np.any(col == 0):
        raise SingularMatrix("zero column")
    As = As / col[None, :]

    lu = As.copy()
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) < pivot_tol:
            raise SingularMatrix(f"pivot {lu[p, k]:.3e} in column {k}")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])

    def lu_solve(rhs):
        y = rhs[perm].copy()
        for i in range(1, n):
            y[i] -= lu[i, :i] @ y[:i]
        for i in range(n - 1, -1, -1):
            y[i] = (y[i] - lu[i, i + 1:] @ y[i + 1:]) / lu[i, i]
        return y

    bs = b / row
    y = lu_solve(bs)
    y = y + lu_solve(bs - As @ y)
    return y / col
