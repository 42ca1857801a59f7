#ifndef TERMCOV_H
#define TERMCOV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; 2, 3 and 4 match the CLI exit codes.
 */
typedef enum {
  TC_STATUS_OK = 0,
  TC_STATUS_NULL_POINTER = 1,
  TC_STATUS_CONFIG = 2,
  TC_STATUS_DATA = 3,
  TC_STATUS_NUMERICAL = 4,
  TC_STATUS_BUFFER_TOO_SMALL = 5,
  TC_STATUS_PANIC = 6,
} TcStatus;

/**
 * Which part of a covariation result to extract.
 */
typedef enum {
  /**
   * All increments.
   */
  TC_KERNEL_PART_TOTAL = 0,
  /**
   * Increments below the threshold.
   */
  TC_KERNEL_PART_TRUNCATED = 1,
  /**
   * Flagged increments.
   */
  TC_KERNEL_PART_JUMPS = 2,
} TcKernelPart;

/**
 * Result of a truncated covariation.
 */
typedef struct TcCovariation TcCovariation;

/**
 * Piecewise-constant covariance kernel.
 */
typedef struct TcKernel TcKernel;

/**
 * Difference-return panel.
 */
typedef struct TcPanel TcPanel;

/**
 * Truncation rule.
 */
typedef struct TcRule TcRule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL, or
 * 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t tc_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tc_version(void);

/**
 * Difference returns of a `n_dates × n_maturities` row-major panel of log
 * bond prices on the maturities `0, Δn, …`.
 *
 * # Safety
 * `log_prices` must point to `n_dates * n_maturities` doubles; `out` must be writable.
 */
TcStatus tc_panel_from_log_prices(const double *log_prices,
                                  size_t n_dates,
                                  size_t n_maturities,
                                  double delta_n,
                                  TcPanel **out);

/**
 * As [`tc_panel_from_log_prices`] for continuously compounded yields.
 *
 * # Safety
 * `yields` must point to `n_dates * n_maturities` doubles; `out` must be writable.
 */
TcStatus tc_panel_from_yields(const double *yields,
                              size_t n_dates,
                              size_t n_maturities,
                              double delta_n,
                              TcPanel **out);

/**
 * # Safety
 * `panel` must be null or a handle from this library not yet freed.
 */
void tc_panel_free(TcPanel *panel);

/**
 * Number of difference-return rows, 0 for a null handle.
 *
 * # Safety
 * `panel` must be null or a live handle.
 */
size_t tc_panel_rows(const TcPanel *panel);

/**
 * Number of maturity cells per row, 0 for a null handle.
 *
 * # Safety
 * `panel` must be null or a live handle.
 */
size_t tc_panel_cols(const TcPanel *panel);

/**
 * Data-driven truncation rule with multiplier `l` and default options
 * (`l = INFINITY` disables truncation but still reports the calibration).
 *
 * # Safety
 * `panel` must be a live handle; `out` must be writable.
 */
TcStatus tc_rule_build(const TcPanel *panel, double l, TcRule **out);

/**
 * Rule with the plain `l²` truncation function and threshold `u_n`.
 *
 * # Safety
 * `out` must be writable.
 */
TcStatus tc_rule_l2(double u_n, TcRule **out);

/**
 * # Safety
 * `rule` must be null or a live handle.
 */
void tc_rule_free(TcRule *rule);

/**
 * Threshold `u_n`, NaN for a null handle.
 *
 * # Safety
 * `rule` must be null or a live handle.
 */
double tc_rule_threshold(const TcRule *rule);

/**
 * Dimension of the Mahalanobis functional, 0 for the `l²` functional or a null handle.
 *
 * # Safety
 * `rule` must be null or a live handle.
 */
size_t tc_rule_dimension(const TcRule *rule);

/**
 * Truncated covariation over all rows; a null `rule` disables truncation.
 *
 * # Safety
 * `panel` must be a live handle, `rule` null or live, `out` writable.
 */
TcStatus tc_covariation(const TcPanel *panel, const TcRule *rule, TcCovariation **out);

/**
 * # Safety
 * `cov` must be null or a live handle.
 */
void tc_covariation_free(TcCovariation *cov);

/**
 * Number of flagged increments, 0 for a null handle.
 *
 * # Safety
 * `cov` must be null or a live handle.
 */
size_t tc_covariation_flag_count(const TcCovariation *cov);

/**
 * Writes the flagged row indices into `out` (capacity `len`).
 *
 * # Safety
 * `cov` must be a live handle; `out` must point to `len` writable `size_t`s.
 */
TcStatus tc_covariation_flags(const TcCovariation *cov, size_t *out, size_t len);

/**
 * `‖q̂⁻‖ / ‖q̂‖`, NaN for a null handle.
 *
 * # Safety
 * `cov` must be null or a live handle.
 */
double tc_covariation_norm_ratio(const TcCovariation *cov);

/**
 * Copies one kernel of the result into a new handle.
 *
 * # Safety
 * `cov` must be a live handle; `out` must be writable.
 */
TcStatus tc_covariation_kernel(const TcCovariation *cov, TcKernelPart part, TcKernel **out);

/**
 * Kernel from a symmetric `m_cells × m_cells` row-major value matrix.
 *
 * # Safety
 * `values` must point to `m_cells²` doubles; `out` must be writable.
 */
TcStatus tc_kernel_new(const double *values, size_t m_cells, double delta_n, TcKernel **out);

/**
 * # Safety
 * `kernel` must be null or a live handle.
 */
void tc_kernel_free(TcKernel *kernel);

/**
 * Number of maturity cells, 0 for a null handle.
 *
 * # Safety
 * `kernel` must be null or a live handle.
 */
size_t tc_kernel_cells(const TcKernel *kernel);

/**
 * Copies the row-major value matrix into `out` (capacity `len`).
 *
 * # Safety
 * `kernel` must be a live handle; `out` must point to `len` writable doubles.
 */
TcStatus tc_kernel_values(const TcKernel *kernel, double *out, size_t len);

/**
 * Hilbert–Schmidt norm, NaN for a null handle.
 *
 * # Safety
 * `kernel` must be null or a live handle.
 */
double tc_kernel_hs_norm(const TcKernel *kernel);

/**
 * Descending operator eigenvalues, `m_cells` of them.
 *
 * # Safety
 * `kernel` must be a live handle; `out` must point to `len` writable doubles.
 */
TcStatus tc_kernel_eigenvalues(const TcKernel *kernel, double *out, size_t len);

/**
 * Smallest number of eigenfunctions explaining more than a fraction `p` of the trace.
 *
 * # Safety
 * `kernel` must be a live handle; `out` must be writable.
 */
TcStatus tc_kernel_explained_dimension(const TcKernel *kernel, double p, size_t *out);

/**
 * `‖k1 − k2‖ / ‖k2‖`.
 *
 * # Safety
 * Both kernels must be live handles; `out` must be writable.
 */
TcStatus tc_kernel_relative_error(const TcKernel *k1, const TcKernel *k2, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TERMCOV_H */
