#ifndef DIVIDEND_EQ_MC_KERNEL_H
#define DIVIDEND_EQ_MC_KERNEL_H

#include <stdint.h>

typedef struct {
    double mu, sigma, l_bar, r_bar, phi;
    double x1, x2, x0, dt;
    int64_t n_steps;
    uint64_t seed;
    int bridge;
} mc_config;

/* Control (l, r) applied on the first pert_steps steps, then the threshold policy. */
typedef struct {
    int64_t pert_steps;
    double l, r;
} mc_variant;

/* Simulate paths [path_begin, path_begin + n_paths) for every variant.
 * Outputs are indexed out[v * ld + i] for local path i.  Returns 0, or -1 on allocation failure. */
int mc_simulate(const mc_config *cfg, const double *disc1, const double *disc2,
                 const mc_variant *var, int n_var, uint64_t path_begin, int64_t n_paths,
                 int64_t ld, double *out1, double *out2, uint8_t *ruined);

/* Philox4x32-10 block function, exposed for known-answer tests. */
void mc_philox(const uint32_t ctr[4], const uint32_t key[2], uint32_t out[4]);

#endif
