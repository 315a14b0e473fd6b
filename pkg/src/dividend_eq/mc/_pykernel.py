"""Numpy implementation of the path simulator.

Same random streams and step rule as the compiled kernel.  Transcendental
functions may differ from the vectorised C ones in the last bit, so the two
backends agree to rounding rather than bitwise.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)


def philox4x32(c0, c1, c2, c3, k0: int, k1: int):
    """Philox4x32-10 on arrays of 32-bit words held in uint64."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    for _ in range(10):
        pa = _M0 * c0
        pb = _M1 * c2
        c0, c1, c2, c3 = (pb >> _S32) ^ c1 ^ np.uint64(k0), pb & _MASK, (pa >> _S32) ^ c3 ^ np.uint64(k1), pa & _MASK
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def philox(ctr, key):
    out = philox4x32(*(np.array([c], dtype=np.uint64) for c in ctr), int(key[0]), int(key[1]))
    return tuple(int(o[0]) for o in out)


def uniforms(m: int, purpose: int, paths: np.ndarray, seed: int):
    """Two 53-bit uniforms per path: the first in (0, 1], the second in [0, 1)."""
    n = paths.shape[0]
    c0 = np.full(n, m & 0xFFFFFFFF, dtype=np.uint64)
    c1 = np.full(n, purpose, dtype=np.uint64)
    c2 = paths & _MASK
    c3 = paths >> _S32
    o0, o1, o2, o3 = philox4x32(c0, c1, c2, c3, seed & 0xFFFFFFFF, seed >> 32)
    ia = ((o1 << _S32) | o0) >> _S11
    ib = ((o3 << _S32) | o2) >> _S11
    return 1.0 - ia.astype(np.float64) * 2.0 ** -53, ib.astype(np.float64) * 2.0 ** -53


def normals(m: int, paths: np.ndarray, seed: int):
    """Standard normals for steps ``2m`` and ``2m + 1`` of each path."""
    u1, u2 = uniforms(m, 0, paths, seed)
    rr = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    return rr * np.cos(ang), rr * np.sin(ang)


def simulate_block(cfg, disc1, disc2, variants, path_begin, n_paths, col0, out1, out2, ruined):
    """Fill ``out[:, col0:col0+n_paths]`` for every variant (see the compiled twin)."""
    if n_paths == 0:
        return
    nv = len(variants)
    if nv == 0:
        raise ValueError("need at least one variant")
    n = int(cfg["n_steps"])
    dt = cfg["dt"]
    sdt = cfg["sigma"] * np.sqrt(dt)
    inv_var = 1.0 / (cfg["sigma"] ** 2 * dt)
    mu, lb, rb, phi, x1, x2 = (cfg[k] for k in ("mu", "l_bar", "r_bar", "phi", "x1", "x2"))
    seed = int(cfg["seed"])
    paths = np.arange(path_begin, path_begin + n_paths, dtype=np.uint64)

    x = np.full((nv, n_paths), cfg["x0"])
    alive = np.ones((nv, n_paths))
    acc1 = np.zeros((nv, n_paths))
    acc2 = np.zeros((nv, n_paths))
    pert_steps = np.array([v[0] for v in variants], dtype=np.int64)[:, None]
    pl = np.array([v[1] for v in variants], dtype=float)[:, None]
    pr = np.array([v[2] for v in variants], dtype=float)[:, None]

    for m in range((n + 1) // 2):
        if not alive.any():
            break
        zs = normals(m, paths, seed)
        if cfg["bridge"]:
            ua, ub = uniforms(m, 1, paths, seed)
            us = (ua, 1.0 - ub)
        for h in range(2):
            k = 2 * m + h
            if k >= n:
                break
            pert = k < pert_steps
            l = np.where(pert, pl, np.where(x >= x2, lb, 0.0))
            r = np.where(pert, pr, np.where(x < x1, rb, 0.0))
            pay = alive * (l - phi * r)
            acc1 += disc1[k] * pay
            acc2 += disc2[k] * pay
            xn = x + (mu - l + r) * dt + sdt * zs[h]
            dead = xn <= 0.0
            if cfg["bridge"]:
                cross = np.exp(-2.0 * inv_var * np.maximum(x, 0.0) * np.maximum(xn, 0.0))
                dead |= us[h] < cross
            alive = np.where(dead, 0.0, alive)
            x = xn

    sl = slice(col0, col0 + n_paths)
    out1[:nv, sl] = acc1 * dt
    out2[:nv, sl] = acc2 * dt
    ruined[:nv, sl] = alive == 0.0
