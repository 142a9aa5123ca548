#ifndef PARADAT_H
#define PARADAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

/**
 * Result codes of all fallible calls.
 */
typedef enum ParadatStatus {
  PARADAT_STATUS_OK = 0,
  PARADAT_STATUS_NULL_POINTER = 1,
  PARADAT_STATUS_INVALID_INPUT = 2,
  PARADAT_STATUS_SOLVER_FAILURE = 3,
  PARADAT_STATUS_BUFFER_TOO_SMALL = 4,
  PARADAT_STATUS_PANIC = 5,
} ParadatStatus;

typedef enum ParadatFormulation {
  PARADAT_FORMULATION_SECOND_ORDER = 0,
  PARADAT_FORMULATION_FOSLS = 1,
} ParadatFormulation;

/**
 * Outcome of a solve.
 */
typedef struct ParadatReport ParadatReport;

/**
 * Parameters of one solve on the unit square `I × Ω = (0,1)²` with the
 * manufactured state `(t³ + 1) sin(πx)`.
 */
typedef struct ParadatConfig {
  enum ParadatFormulation formulation;
  /**
   * Cells per direction.
   */
  size_t n;
  /**
   * Regularization parameter; a negative value selects `ε = h`.
   */
  double eps;
  size_t ell;
  size_t estimate_level;
  double omega_lo;
  double omega_hi;
  /**
   * Constant perturbation of the observed state.
   */
  double lambda;
  /**
   * Positive: fixed relative tolerance. Zero: estimator-coupled stop.
   */
  double tol;
  size_t max_iters;
} ParadatConfig;

/**
 * Scalar results of a report. Estimators are the squared functionals
 * `G̃₀`, `G̃_ε` (or their first-order analogues) at the estimator level.
 */
typedef struct ParadatSummary {
  size_t dim;
  double estimator0;
  double estimator_eps;
  size_t iterations;
  bool converged;
  /**
   * Lanczos estimate; NaN if unavailable.
   */
  double cond_est;
} ParadatSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * call into this library on the same thread.
 */
const char *paradat_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *paradat_version(void);

/**
 * Fill `out` with the defaults: second order, `n = 16`, `ε = h`,
 * `(ℓ, L) = (0, 2)`, `ω = [¼, ¾]`, no perturbation, coupled stop.
 *
 * # Safety
 * `out` must be null or point to writable memory for one config.
 */
enum ParadatStatus paradat_config_default(struct ParadatConfig *out);

/**
 * Assemble and solve; on success `*out` receives a new report handle.
 *
 * # Safety
 * `cfg` must be null or point to a valid config, `out` null or writable.
 */
enum ParadatStatus paradat_solve(const struct ParadatConfig *cfg, struct ParadatReport **out);

/**
 * Release a report. Null is ignored.
 *
 * # Safety
 * `report` must be null or a handle from [`paradat_solve`] not yet freed.
 */
void paradat_report_free(struct ParadatReport *report);

/**
 * # Safety
 * `report` must be a live handle, `out` writable.
 */
enum ParadatStatus paradat_report_summary(const struct ParadatReport *report,
                                          struct ParadatSummary *out);

/**
 * Copy the state coefficients (time-major, `n_time · n_space` entries)
 * into `buf`. `*len` holds the capacity on entry and the required length
 * on return; a short buffer yields `BufferTooSmall` without copying.
 *
 * # Safety
 * `report` must be a live handle, `len` writable, and `buf` valid for `*len`
 * doubles (or null when `*len` is 0).
 */
enum ParadatStatus paradat_report_state(const struct ParadatReport *report,
                                        double *buf,
                                        size_t *len);

/**
 * Reference-element inf-sup constant: `d = 1` uses bisection (`q ≤ 4`),
 * `d = 2` red refinement (`q ≤ 2`).
 *
 * # Safety
 * `out` must be writable.
 */
enum ParadatStatus paradat_infsup_alpha(size_t d, size_t q, size_t level, double *out);

/**
 * Run the biorthogonality checks on the red-refined triangle. `mass` receives
 * the 6 × 6 generalized mass matrix row by row (36 doubles), `passed`
 * whether every check holds to 1e-12.
 *
 * # Safety
 * `mass` must be valid for 36 doubles and `passed` writable.
 */
enum ParadatStatus paradat_appendix_check(double *mass, bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARADAT_H */
