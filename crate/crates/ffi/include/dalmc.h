#ifndef DALMC_H
#define DALMC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum DalmcStatus {
  DALMC_STATUS_OK = 0,
  DALMC_STATUS_NULL_POINTER = 1,
  DALMC_STATUS_INVALID_UTF8 = 2,
  DALMC_STATUS_CONFIG = 3,
  DALMC_STATUS_INVALID_PARAMETER = 4,
  DALMC_STATUS_DIMENSION_MISMATCH = 5,
  DALMC_STATUS_NUMERICAL = 6,
  DALMC_STATUS_MISSING_CONSTANT = 7,
  DALMC_STATUS_CHAIN_FAILURE = 8,
  DALMC_STATUS_BUFFER_TOO_SMALL = 9,
  DALMC_STATUS_UNSUPPORTED = 10,
  DALMC_STATUS_PANIC = 11,
} DalmcStatus;

/**
 * A diffusion path built from a TOML experiment config.
 */
typedef struct DalmcPath DalmcPath;

/**
 * Final states of a sampler run.
 */
typedef struct DalmcRun DalmcRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message into `buf` (NUL-terminated, truncated to fit).
 * Returns the full message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t dalmc_last_error(char *buf, size_t len);

/**
 * Build a path from the `target`, `base` and `schedule` tables of a TOML
 * experiment config.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum DalmcStatus dalmc_path_from_toml(const char *toml, struct DalmcPath **out);

/**
 * Release a path. Null is ignored.
 *
 * # Safety
 * `path` must come from [`dalmc_path_from_toml`] and not be used afterwards.
 */
void dalmc_path_free(struct DalmcPath *path);

/**
 * # Safety
 * `path` and `out` must be valid pointers.
 */
enum DalmcStatus dalmc_path_dim(const struct DalmcPath *path, size_t *out);

/**
 * Schedule value λ at time t.
 *
 * # Safety
 * `path` and `out` must be valid pointers.
 */
enum DalmcStatus dalmc_path_lambda(const struct DalmcPath *path, double t, double *out);

/**
 * log μ_t(x).
 *
 * # Safety
 * `x` must point to `len` doubles; `path` and `out` must be valid pointers.
 */
enum DalmcStatus dalmc_path_log_density(const struct DalmcPath *path,
                                        double t,
                                        const double *x,
                                        size_t len,
                                        double *out);

/**
 * ∇log μ_t(x), written to `out[0..len]`.
 *
 * # Safety
 * `x` and `out` must each point to `len` doubles; `path` must be valid.
 */
enum DalmcStatus dalmc_path_score(const struct DalmcPath *path,
                                  double t,
                                  const double *x,
                                  size_t len,
                                  double *out);

/**
 * Upper bound L_t on the Lipschitz constant of the marginal score.
 *
 * # Safety
 * `path` and `out` must be valid pointers.
 */
enum DalmcStatus dalmc_lipschitz_bound(const struct DalmcPath *path, double t, double *out);

/**
 * Closed-form upper bound on the action of the path.
 *
 * # Safety
 * `path` and `out` must be valid pointers.
 */
enum DalmcStatus dalmc_action_bound(const struct DalmcPath *path, double *out);

/**
 * Run the sampler with uniform steps and no score perturbation.
 *
 * # Safety
 * `path` and `out` must be valid pointers.
 */
enum DalmcStatus dalmc_run(const struct DalmcPath *path,
                           double kappa,
                           size_t steps,
                           size_t chains,
                           uint64_t seed,
                           struct DalmcRun **out);

/**
 * Release a run. Null is ignored.
 *
 * # Safety
 * `run` must come from [`dalmc_run`] and not be used afterwards.
 */
void dalmc_run_free(struct DalmcRun *run);

/**
 * Number of chains, dimension and number of flagged chains of a run.
 *
 * # Safety
 * `run` must be valid; each out pointer may be null.
 */
enum DalmcStatus dalmc_run_shape(const struct DalmcRun *run,
                                 size_t *chains,
                                 size_t *dim,
                                 size_t *flagged);

/**
 * Copy final states row-major (chain by coordinate) into `buf`, which must
 * hold chains × dim doubles.
 *
 * # Safety
 * `run` must be valid and `buf` must point to `len` writable doubles.
 */
enum DalmcStatus dalmc_run_samples(const struct DalmcRun *run, double *buf, size_t len);

/**
 * Step plan for the Gaussian-base complexity bound.
 *
 * # Safety
 * `kappa` and `steps` must be valid pointers.
 */
enum DalmcStatus dalmc_plan_gaussian(double eps,
                                     size_t d,
                                     double m2,
                                     double l_max,
                                     double *kappa,
                                     uint64_t *steps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DALMC_H */
