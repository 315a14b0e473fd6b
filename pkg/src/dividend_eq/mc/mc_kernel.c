/* Euler simulation of the controlled surplus, W paths at a time.
 *
 * Randomness is counter based: the normals for steps 2m and 2m+1 of path p
 * come from Philox4x32-10 with key = seed and counter = (m, 0, p_lo, p_hi);
 * bridge uniforms use counter (m, 1, p_lo, p_hi), both mapped into (0, 1].  A path's draws therefore
 * do not depend on how paths are grouped into blocks or threads.
 *
 * The stages (Philox, uniform conversion, log, cos, sin) run in separate
 * loops over the W lanes so the compiler can vectorise the math calls.
 */
#include "mc_kernel.h"

#include <math.h>
#include <stdlib.h>
#include <string.h>

#define W 64
#define TWO_PI 6.283185307179586
#define LOG_2_53 36.7368005696771

static inline void philox_round_loop(uint32_t *c0, uint32_t *c1, uint32_t *c2, uint32_t *c3,
                                     uint32_t k0, uint32_t k1)
{
    for (int r = 0; r < 10; r++) {
        uint64_t pa = (uint64_t)0xD2511F53u * *c0;
        uint64_t pb = (uint64_t)0xCD9E8D57u * *c2;
        uint32_t h0 = (uint32_t)(pa >> 32), l0 = (uint32_t)pa;
        uint32_t h1 = (uint32_t)(pb >> 32), l1 = (uint32_t)pb;
        *c0 = h1 ^ *c1 ^ k0;
        *c2 = h0 ^ *c3 ^ k1;
        *c1 = l1;
        *c3 = l0;
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
    }
}

void mc_philox(const uint32_t ctr[4], const uint32_t key[2], uint32_t out[4])
{
    uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
    philox_round_loop(&c0, &c1, &c2, &c3, key[0], key[1]);
    out[0] = c0; out[1] = c1; out[2] = c2; out[3] = c3;
}

/* Two 53-bit uniforms per lane: ua in (0, 1], ub in [0, 1).  Lane j uses
 * counter (m[j], purpose, path[j]). */
static void uniforms(const uint32_t *restrict m, uint32_t purpose, const uint64_t *restrict path,
                     uint32_t k0, uint32_t k1, double *restrict ua, double *restrict ub)
{
    uint32_t C0[W], C1[W], C2[W], C3[W];
    for (int j = 0; j < W; j++) {
        uint32_t c0 = m[j], c1 = purpose, c2 = (uint32_t)path[j], c3 = (uint32_t)(path[j] >> 32);
        philox_round_loop(&c0, &c1, &c2, &c3, k0, k1);
        C0[j] = c0; C1[j] = c1; C2[j] = c2; C3[j] = c3;
    }
    for (int j = 0; j < W; j++) {
        int64_t ia = (int64_t)((((uint64_t)C1[j] << 32) | C0[j]) >> 11);
        int64_t ib = (int64_t)((((uint64_t)C3[j] << 32) | C2[j]) >> 11);
        ua[j] = 1.0 - (double)ia * 0x1p-53;
        ub[j] = (double)ib * 0x1p-53;
    }
}

static void normals(const uint32_t *restrict m, const uint64_t *restrict path, uint32_t k0, uint32_t k1,
                    double *restrict z0, double *restrict z1)
{
    double u1[W], u2[W], rr[W];
    uniforms(m, 0u, path, k0, k1, u1, u2);
    for (int j = 0; j < W; j++) u2[j] *= TWO_PI;
    for (int j = 0; j < W; j++) rr[j] = sqrt(-2.0 * log(u1[j]));
    for (int j = 0; j < W; j++) z0[j] = rr[j] * cos(u2[j]);
    for (int j = 0; j < W; j++) z1[j] = rr[j] * sin(u2[j]);
}

typedef struct {
    double *x, *alive, *acc1, *acc2;  /* [n_var][W] */
    uint64_t path[W];
    uint32_t m[W];
    int64_t slot[W];                  /* local output column, -1 when idle */
} lanes_t;

static void load_lane(lanes_t *L, int j, int n_var, double x0, uint64_t path, int64_t slot)
{
    for (int v = 0; v < n_var; v++) {
        L->x[v * W + j] = x0;
        L->alive[v * W + j] = 1.0;
        L->acc1[v * W + j] = 0.0;
        L->acc2[v * W + j] = 0.0;
    }
    L->path[j] = path;
    L->m[j] = 0;
    L->slot[j] = slot;
}

static void idle_lane(lanes_t *L, int j, int n_var)
{
    for (int v = 0; v < n_var; v++) L->alive[v * W + j] = 0.0;
    L->slot[j] = -1;
}

/* Lanes advance independently: a lane whose path is ruined in every variant
 * (or reaches the horizon) writes its result and takes the next path. */
static void run_paths(const mc_config *cfg, const double *disc1, const double *disc2,
                      const mc_variant *var, int n_var, uint64_t path_begin, int64_t n_paths,
                      int64_t ld, double *out1, double *out2, uint8_t *ruined, lanes_t *L)
{
    const uint32_t k0 = (uint32_t)cfg->seed, k1 = (uint32_t)(cfg->seed >> 32);
    const double dt = cfg->dt, sdt = cfg->sigma * sqrt(cfg->dt);
    const double inv_var = 1.0 / (cfg->sigma * cfg->sigma * cfg->dt);
    const double mu = cfg->mu, lb = cfg->l_bar, rb = cfg->r_bar, phi = cfg->phi;
    const double x1 = cfg->x1, x2 = cfg->x2;
    const int64_t n = cfg->n_steps;

    int64_t next = 0;
    int active = 0;
    for (int j = 0; j < W; j++) {
        if (next < n_paths) {
            load_lane(L, j, n_var, cfg->x0, path_begin + (uint64_t)next, next);
            next++;
            active++;
        } else {
            load_lane(L, j, n_var, cfg->x0, 0, -1);
            idle_lane(L, j, n_var);
        }
    }

    double z[2][W], u[2][W], d1[W], d2[W], valid[W];
    while (active > 0) {
        normals(L->m, L->path, k0, k1, z[0], z[1]);
        int have_u = 0;

        for (int h = 0; h < 2; h++) {
            int64_t kk[W];
            for (int j = 0; j < W; j++) {
                int64_t k = 2 * (int64_t)L->m[j] + h;
                int ok = L->slot[j] >= 0 && k < n;
                kk[j] = ok ? k : 0;
                valid[j] = ok ? 1.0 : 0.0;
            }
            for (int j = 0; j < W; j++) {
                d1[j] = valid[j] * disc1[kk[j]];
                d2[j] = valid[j] * disc2[kk[j]];
            }
            const double *restrict zk = z[h];
            const double *restrict uk = u[h];
            for (int v = 0; v < n_var; v++) {
                double *restrict xv = L->x + v * W, *restrict av = L->alive + v * W;
                double *restrict a1 = L->acc1 + v * W, *restrict a2 = L->acc2 + v * W;
                const int64_t ps = var[v].pert_steps;
                const double pl = var[v].l, pr = var[v].r;
                double xo[W];
                for (int j = 0; j < W; j++) {
                    double xs = xv[j];
                    int pert = kk[j] < ps;
                    double l = pert ? pl : (xs >= x2 ? lb : 0.0);
                    double r = pert ? pr : (xs < x1 ? rb : 0.0);
                    double pay = av[j] * (l - phi * r);
                    a1[j] += d1[j] * pay;
                    a2[j] += d2[j] * pay;
                    double xn = xs + (mu - l + r) * dt + sdt * zk[j];
                    av[j] = (xn <= 0.0 && valid[j] != 0.0) ? 0.0 : av[j];
                    xo[j] = xs;
                    xv[j] = valid[j] != 0.0 ? xn : xs;
                }
                if (cfg->bridge) {
                    /* crossing probability of the bridge between the two grid values */
                    double arg[W], cross[W], need = 0.0;
                    for (int j = 0; j < W; j++)
                        arg[j] = 2.0 * inv_var * fmax(xo[j], 0.0) * fmax(xv[j], 0.0);
                    for (int j = 0; j < W; j++)
                        need += (arg[j] < LOG_2_53 && av[j] != 0.0 && valid[j] != 0.0) ? 1.0 : 0.0;
                    /* the bridge uniforms lie in [2^-53, 1], so probabilities below 2^-53 never
                     * kill and the draw can be skipped without changing any path */
                    if (need != 0.0) {
                        for (int j = 0; j < W; j++) cross[j] = exp(-arg[j]);
                        if (!have_u) {
                            uniforms(L->m, 1u, L->path, k0, k1, u[0], u[1]);
                            for (int j = 0; j < W; j++) u[1][j] = 1.0 - u[1][j];
                            have_u = 1;
                        }
                        for (int j = 0; j < W; j++)
                            av[j] = (uk[j] < cross[j] && valid[j] != 0.0) ? 0.0 : av[j];
                    }
                }
            }
        }

        for (int j = 0; j < W; j++) {
            if (L->slot[j] < 0) continue;
            L->m[j]++;
            double any = 0.0;
            for (int v = 0; v < n_var; v++) any += L->alive[v * W + j];
            if (any != 0.0 && 2 * (int64_t)L->m[j] < n) continue;
            int64_t c = L->slot[j];
            for (int v = 0; v < n_var; v++) {
                out1[v * ld + c] = L->acc1[v * W + j] * dt;
                out2[v * ld + c] = L->acc2[v * W + j] * dt;
                ruined[v * ld + c] = L->alive[v * W + j] == 0.0;
            }
            if (next < n_paths) {
                load_lane(L, j, n_var, cfg->x0, path_begin + (uint64_t)next, next);
                next++;
            } else {
                idle_lane(L, j, n_var);
                active--;
            }
        }
    }
}

int mc_simulate(const mc_config *cfg, const double *disc1, const double *disc2,
                const mc_variant *var, int n_var, uint64_t path_begin, int64_t n_paths,
                int64_t ld, double *out1, double *out2, uint8_t *ruined)
{
    size_t sz = (size_t)n_var * W * sizeof(double);
    lanes_t L;
    L.x = malloc(sz); L.alive = malloc(sz); L.acc1 = malloc(sz); L.acc2 = malloc(sz);
    if (!L.x || !L.alive || !L.acc1 || !L.acc2) {
        free(L.x); free(L.alive); free(L.acc1); free(L.acc2);
        return -1;
    }
    run_paths(cfg, disc1, disc2, var, n_var, path_begin, n_paths, ld, out1, out2, ruined, &L);
    free(L.x); free(L.alive); free(L.acc1); free(L.acc2);
    return 0;
}
