# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled path simulator; see ``mc_kernel.c``."""

from libc.stdint cimport int64_t, uint8_t, uint32_t, uint64_t

import numpy as np


cdef extern from "mc_kernel.h":
    ctypedef struct mc_config:
        double mu, sigma, l_bar, r_bar, phi
        double x1, x2, x0, dt
        int64_t n_steps
        uint64_t seed
        int bridge

    ctypedef struct mc_variant:
        int64_t pert_steps
        double l, r

    int mc_simulate(const mc_config *cfg, const double *disc1, const double *disc2,
                    const mc_variant *var, int n_var, uint64_t path_begin, int64_t n_paths,
                    int64_t ld, double *out1, double *out2, uint8_t *ruined) nogil
    void mc_philox(const uint32_t *ctr, const uint32_t *key, uint32_t *out)


def simulate_block(dict cfg, double[::1] disc1, double[::1] disc2, variants,
                   uint64_t path_begin, int64_t n_paths, int64_t col0,
                   double[:, ::1] out1, double[:, ::1] out2, uint8_t[:, ::1] ruined):
    """Fill columns ``[col0, col0 + n_paths)`` of the output arrays; one row per variant.

    ``variants`` is a sequence of ``(pert_steps, l, r)``.
    """
    cdef mc_config c
    c.mu = cfg["mu"]; c.sigma = cfg["sigma"]; c.l_bar = cfg["l_bar"]; c.r_bar = cfg["r_bar"]
    c.phi = cfg["phi"]; c.x1 = cfg["x1"]; c.x2 = cfg["x2"]; c.x0 = cfg["x0"]; c.dt = cfg["dt"]
    c.n_steps = cfg["n_steps"]; c.seed = cfg["seed"]; c.bridge = 1 if cfg["bridge"] else 0
    if disc1.shape[0] < c.n_steps or disc2.shape[0] < c.n_steps:
        raise ValueError("discount tables shorter than n_steps")

    cdef int n_var = len(variants)
    if out1.shape[0] < n_var or col0 < 0 or out1.shape[1] < col0 + n_paths:
        raise ValueError("output arrays too small")
    if out2.shape[0] != out1.shape[0] or out2.shape[1] != out1.shape[1]:
        raise ValueError("output arrays must share a shape")
    if ruined.shape[0] != out1.shape[0] or ruined.shape[1] != out1.shape[1]:
        raise ValueError("output arrays must share a shape")
    var_buf = np.zeros(n_var, dtype=[("pert_steps", np.int64), ("l", np.float64), ("r", np.float64)])
    for i, (k, l, r) in enumerate(variants):
        var_buf[i] = (k, l, r)
    cdef mc_variant[::1] vv = var_buf
    cdef int64_t ld = out1.shape[1]
    cdef int rc
    if n_paths == 0:
        return
    if n_var == 0:
        raise ValueError("need at least one variant")
    with nogil:
        rc = mc_simulate(&c, &disc1[0], &disc2[0], &vv[0], n_var, path_begin, n_paths,
                         ld, &out1[0, col0], &out2[0, col0], &ruined[0, col0])
    if rc != 0:
        raise MemoryError("simulation workspace allocation failed")


def philox(ctr, key):
    """Philox4x32-10 of a 4-word counter under a 2-word key."""
    cdef uint32_t c[4]
    cdef uint32_t k[2]
    cdef uint32_t o[4]
    for i in range(4):
        c[i] = ctr[i]
    k[0] = key[0]; k[1] = key[1]
    mc_philox(c, k, o)
    return (o[0], o[1], o[2], o[3])
