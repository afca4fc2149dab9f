#ifndef HOMLAB_H
#define HOMLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum HomlabStatus {
  HOMLAB_STATUS_OK = 0,
  HOMLAB_STATUS_NULL_POINTER = 1,
  HOMLAB_STATUS_INVALID_ARGUMENT = 2,
  HOMLAB_STATUS_CONFIG = 3,
  HOMLAB_STATUS_SOLVER = 4,
  HOMLAB_STATUS_COMPATIBILITY = 5,
  HOMLAB_STATUS_COERCIVITY = 6,
  HOMLAB_STATUS_SPECTRAL = 7,
  HOMLAB_STATUS_INSUFFICIENT_DATA = 8,
  HOMLAB_STATUS_IO = 9,
  HOMLAB_STATUS_PANIC = 99,
} HomlabStatus;

/**
 * Solved periodic cell problems.
 */
typedef struct HomlabCellSolution HomlabCellSolution;

/**
 * Coefficient model `(A, W, f)`.
 */
typedef struct HomlabModel HomlabModel;

/**
 * Preset validation on a sampling lattice.
 */
typedef struct HomlabValidation {
  double max_symmetry_defect;
  double min_rayleigh;
  double max_rayleigh;
  double max_periodicity_defect;
  double mean_w;
  /**
   * 1 when every check passed.
   */
  int passed;
} HomlabValidation;

/**
 * Least-squares fit of `log v = slope · log ε + intercept`.
 */
typedef struct HomlabRate {
  double slope;
  double intercept;
  double r2;
} HomlabRate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *homlab_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated and
 * always NUL-terminated when `len > 0`). Returns the full message length
 * excluding the terminator, so a caller can size a second call.
 *
 * # Safety
 * `buf` must be NULL or point to `len` writable bytes.
 */
size_t homlab_last_error_message(char *buf, size_t len);

/**
 * Builds a model from preset names (`identity`, `layered`, `smooth-iso`;
 * `zero`, `sine1`, `sine-mix`; `one`, `sine-sine`).
 *
 * # Safety
 * The name arguments must be NULL or NUL-terminated strings; `out_model`
 * must be NULL or writable.
 */
enum HomlabStatus homlab_model_new(const char *a_preset,
                                   const char *w_preset,
                                   const char *f_preset,
                                   struct HomlabModel **out_model);

/**
 * # Safety
 * `model` must be NULL or a handle from [`homlab_model_new`] not yet freed.
 */
void homlab_model_free(struct HomlabModel *model);

/**
 * `A(y)` in row-major order.
 *
 * # Safety
 * `model` must be a live handle; `out_a` must be NULL or point to 4 doubles.
 */
enum HomlabStatus homlab_model_eval_a(const struct HomlabModel *model,
                                      double y1,
                                      double y2,
                                      double *out_a);

/**
 * `W(y)`.
 *
 * # Safety
 * `model` must be a live handle; `out_w` must be NULL or writable.
 */
enum HomlabStatus homlab_model_eval_w(const struct HomlabModel *model,
                                      double y1,
                                      double y2,
                                      double *out_w);

/**
 * Samples the model on a `lattice_n × lattice_n` lattice and checks
 * symmetry, ellipticity, periodicity and the mean of `W`.
 *
 * # Safety
 * `model` must be a live handle; `out_report` must be NULL or writable.
 */
enum HomlabStatus homlab_model_validate(const struct HomlabModel *model,
                                        size_t lattice_n,
                                        struct HomlabValidation *out_report);

/**
 * Solves the cell problems on an `n × n` periodic grid (`n ≥ 4`).
 *
 * # Safety
 * `model` must be a live handle; `out_solution` must be NULL or writable.
 */
enum HomlabStatus homlab_cell_solve(const struct HomlabModel *model,
                                    size_t n,
                                    struct HomlabCellSolution **out_solution);

/**
 * # Safety
 * `solution` must be NULL or a handle from [`homlab_cell_solve`] not yet freed.
 */
void homlab_cell_free(struct HomlabCellSolution *solution);

/**
 * `Â` in row-major order.
 *
 * # Safety
 * `solution` must be a live handle; `out_a_hat` must be NULL or point to 4
 * doubles.
 */
enum HomlabStatus homlab_cell_effective_matrix(const struct HomlabCellSolution *solution,
                                               double *out_a_hat);

/**
 * `M(Wχ_w)`.
 *
 * # Safety
 * `solution` must be a live handle; `out_m` must be NULL or writable.
 */
enum HomlabStatus homlab_cell_effective_potential(const struct HomlabCellSolution *solution,
                                                  double *out_m);

/**
 * `χ_w(y)`, interpolated bilinearly from the grid.
 *
 * # Safety
 * `solution` must be a live handle; `out_value` must be NULL or writable.
 */
enum HomlabStatus homlab_cell_chi_w(const struct HomlabCellSolution *solution,
                                    double y1,
                                    double y2,
                                    double *out_value);

/**
 * Fits `len` points `(eps[i], values[i])` on log-log axes. Points with a
 * non-positive value are dropped; at least three must remain.
 *
 * # Safety
 * `eps` and `values` must point to `len` doubles; `out_rate` must be NULL or
 * writable.
 */
enum HomlabStatus homlab_rate_fit(const double *eps,
                                  const double *values,
                                  size_t len,
                                  struct HomlabRate *out_rate);

/**
 * Runs the full pipeline on a config file, writing every artifact. When
 * `output_dir` is non-NULL it overrides the config's `output_dir`. On
 * failure `out_exit_code` (if non-NULL) receives the CLI exit code of the
 * failing stage.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `output_dir` NULL or a
 * NUL-terminated string; `out_exit_code` NULL or writable.
 */
enum HomlabStatus homlab_run_experiment(const char *config_path,
                                        const char *output_dir,
                                        int *out_exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMLAB_H */
