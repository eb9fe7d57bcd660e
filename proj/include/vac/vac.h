#ifndef VAC_H
#define VAC_H

/* C interface to the tabular actor-critic library. Every entry point
 * returns a status code; the message for the most recent failure on the
 * calling thread is available from vac_last_error(). Handles are opaque and
 * must be released with their destroy function. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vac_status {
  VAC_OK = 0,
  VAC_INVALID_ARGUMENT = 1,
  VAC_RUNTIME_ERROR = 2,
  VAC_DIVERGENCE = 3
} vac_status;

const char* vac_last_error(void);

typedef struct vac_mdp vac_mdp;

vac_status vac_mdp_create_ring(int n, double sigma, double gamma,
                               vac_mdp** out);
vac_status vac_mdp_create_torus(int n1, int n2, double sigma, double gamma,
                                vac_mdp** out);
vac_status vac_mdp_create_random(int n_states, int n_actions, double gamma,
                                 unsigned long long seed, vac_mdp** out);
vac_status vac_mdp_load(const char* path, vac_mdp** out);
vac_status vac_mdp_save(const vac_mdp* mdp, const char* path);
void vac_mdp_destroy(vac_mdp* mdp);
/* Accessors return 0 on a null handle. */
int vac_mdp_num_states(const vac_mdp* mdp);
int vac_mdp_num_actions(const vac_mdp* mdp);
double vac_mdp_gamma(const vac_mdp* mdp);

typedef struct vac_solution vac_solution;

/* lambda = 0 solves the exact control problem; lambda > 0 the
 * entropy-smoothed one. tol <= 0 picks the default (1e-10). */
vac_status vac_solve(const vac_mdp* mdp, double lambda, double tol,
                     vac_solution** out);
void vac_solution_destroy(vac_solution* sol);
/* Buffers must hold n_states, n_states * n_actions (row-major), and
 * n_states entries respectively. */
vac_status vac_solution_values(const vac_solution* sol, double* buf,
                               size_t len);
vac_status vac_solution_policy(const vac_solution* sol, double* buf,
                               size_t len);
vac_status vac_solution_greedy(const vac_solution* sol, int* buf, size_t len);

vac_status vac_action_gap(const vac_mdp* mdp, double* out);
/* Exact-recovery weight threshold at the given alpha, uniform state
 * weights. Requires 0 < alpha < gap / 3. */
vac_status vac_beta_threshold(const vac_mdp* mdp, double alpha, double* out);

typedef struct vac_experiment vac_experiment;

vac_status vac_experiment_load(const char* path, vac_experiment** out);
vac_status vac_experiment_parse(const char* text, vac_experiment** out);
void vac_experiment_destroy(vac_experiment* exp);
/* Newline-joined non-fatal config warnings, "" when none. Owned by the
 * handle. */
const char* vac_experiment_warnings(const vac_experiment* exp);
vac_status vac_experiment_override_seeds(vac_experiment* exp,
                                         const unsigned long long* seeds,
                                         size_t n);
/* Runs every configured seed and writes trace CSVs, aggregate.csv and
 * metadata.json. out_dir may be NULL to use the configured directory.
 * Returns VAC_DIVERGENCE when any seed diverged or failed; partial traces
 * are still written. */
vac_status vac_experiment_run(const vac_experiment* exp, const char* out_dir);
/* Text report of the exact solution; free with vac_string_free. */
vac_status vac_experiment_solve_report(const vac_experiment* exp,
                                       char** text_out);
vac_status vac_experiment_write_trajectory(const vac_experiment* exp,
                                           const char* path);
void vac_string_free(char* s);

/* Runs a named property suite (matrix-bounds | fixed-point | optimal-limit
 * | regularized-limit | gradient-consistency | all), printing one PASS/FAIL
 * line per check to stdout. VAC_RUNTIME_ERROR when a check fails. */
vac_status vac_verify(const char* suite);

#ifdef __cplusplus
}
#endif

#endif /* VAC_H */
