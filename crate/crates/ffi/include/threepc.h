#ifndef THREEPC_H
#define THREEPC_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TpcStatus {
  TPC_STATUS_OK = 0,
  TPC_STATUS_NULL_POINTER = 1,
  TPC_STATUS_INVALID_ARGUMENT = 2,
  TPC_STATUS_CONFIG = 3,
  TPC_STATUS_IO = 4,
  TPC_STATUS_DOMAIN = 5,
  TPC_STATUS_OUT_OF_RANGE = 6,
  TPC_STATUS_PANIC = 7,
} TpcStatus;

typedef enum TpcTermination {
  TPC_TERMINATION_CONVERGED = 0,
  TPC_TERMINATION_MAX_ROUNDS = 1,
  TPC_TERMINATION_DIVERGED = 2,
  TPC_TERMINATION_BIT_BUDGET = 3,
  TPC_TERMINATION_TIME_LIMIT = 4,
} TpcTermination;

/**
 * Opaque problem handle.
 */
typedef struct TpcProblem TpcProblem;

/**
 * Opaque handle to a finished run.
 */
typedef struct TpcRun TpcRun;

typedef struct TpcConstants {
  double l_minus;
  double l_plus;
  double l_pm;
  /**
   * NaN when the problem has no strong convexity constant.
   */
  double mu;
} TpcConstants;

typedef struct TpcTheoryParams {
  double a;
  double b;
  /**
   * NaN when the method has no free parameter.
   */
  double s_star;
  /**
   * Nonzero when the constants bound the aggregated error.
   */
  uint8_t aggregated;
} TpcTheoryParams;

typedef struct TpcRecord {
  uint64_t t;
  double f;
  double grad_norm_sq;
  double g_t;
  double bits_cum_per_worker;
  double transmitted_fraction;
} TpcRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *tpc_last_error_message(void);

/**
 * Generate a synthetic quadratic.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum TpcStatus tpc_problem_quadratic_new(size_t n,
                                         size_t d,
                                         double lambda,
                                         double s,
                                         uint64_t seed,
                                         struct TpcProblem **out);

/**
 * Build any problem from its JSON description (the `problem` object of a
 * run config). Relative paths are taken from the working directory.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TpcStatus tpc_problem_from_json(const char *json, uint64_t seed, struct TpcProblem **out);

/**
 * # Safety
 * `problem` must be a live handle; `d` and `n` may be null.
 */
enum TpcStatus tpc_problem_shape(const struct TpcProblem *problem, size_t *d, size_t *n);

/**
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum TpcStatus tpc_problem_constants(const struct TpcProblem *problem, struct TpcConstants *out);

/**
 * # Safety
 * `problem` must be null or a handle from this library that was not freed yet.
 */
void tpc_problem_free(struct TpcProblem *problem);

/**
 * `(A, B)` of a method given as JSON, at dimension `d` with `n` workers.
 *
 * # Safety
 * `method_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TpcStatus tpc_theory_params(const char *method_json,
                                 size_t d,
                                 size_t n,
                                 struct TpcTheoryParams *out);

/**
 * Theoretical stepsize; `pl` selects the strongly convex rule.
 *
 * # Safety
 * All pointers must be valid.
 */
enum TpcStatus tpc_stepsize(const struct TpcConstants *constants,
                            const struct TpcTheoryParams *params,
                            bool pl,
                            double *out);

/**
 * Apply a compressor given as JSON to `x[0..d]`, writing `out[0..d]`.
 * Randomized compressors draw from `seed`.
 *
 * # Safety
 * `x` and `out` must each point to `d` doubles.
 */
enum TpcStatus tpc_compress(const char *compressor_json,
                            const double *x,
                            size_t d,
                            size_t worker,
                            size_t n_workers,
                            uint64_t seed,
                            double *out);

/**
 * Train on `problem`. `config_json` holds `method` and optionally
 * `stepsize`, `stepsize_multiplier`, `max_rounds`, `seed`, `g0_mode`, `stop`.
 *
 * # Safety
 * `problem` must be a live handle, `config_json` a NUL-terminated string and
 * `out` a valid pointer.
 */
enum TpcStatus tpc_run(const struct TpcProblem *problem,
                       const char *config_json,
                       struct TpcRun **out);

/**
 * # Safety
 * `run` must be a live handle.
 */
size_t tpc_run_record_count(const struct TpcRun *run);

/**
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum TpcStatus tpc_run_record(const struct TpcRun *run, size_t index, struct TpcRecord *out);

/**
 * Copy the final iterate into `out`, which must hold exactly `len == d` doubles.
 *
 * # Safety
 * `run` must be a live handle and `out` must point to `len` doubles.
 */
enum TpcStatus tpc_run_final_iterate(const struct TpcRun *run, double *out, size_t len);

/**
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum TpcStatus tpc_run_termination(const struct TpcRun *run, enum TpcTermination *out);

/**
 * Effective stepsize used by the run, or NaN for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
double tpc_run_stepsize(const struct TpcRun *run);

/**
 * # Safety
 * `run` must be null or a handle from this library that was not freed yet.
 */
void tpc_run_free(struct TpcRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THREEPC_H */
