/* C interface to the rubric scoring and validation kernels. */

#ifndef RUBRIC_H
#define RUBRIC_H

/* Generated by cbindgen from rubric-capi; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a C API call. The numeric values match the CLI exit codes
 * where a counterpart exists.
 */
typedef enum RubricStatus {
  /**
   * The call succeeded.
   */
  RubricStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  RubricStatus_NullArgument = 1,
  /**
   * Invalid configuration or parameters.
   */
  RubricStatus_Config = 2,
  /**
   * Invalid or malformed input data.
   */
  RubricStatus_Data = 3,
  /**
   * A model backend failed.
   */
  RubricStatus_Backend = 4,
  /**
   * The requested statistic is undefined on this input.
   */
  RubricStatus_Degenerate = 5,
  /**
   * An internal invariant failed; the library state is still sound.
   */
  RubricStatus_Internal = 6,
} RubricStatus;

/**
 * Opaque handle to a loaded score matrix. Owned by the caller through
 * [`rubric_score_matrix_read_csv`] and released with
 * [`rubric_score_matrix_free`].
 */
typedef struct RubricScoreMatrix RubricScoreMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The library version as a static NUL-terminated string.
 */
const char *rubric_version(void);

/**
 * The message from the most recent failed call on this thread, or an
 * empty string after a success. The pointer stays valid until the next
 * call into the library from the same thread.
 */
const char *rubric_last_error(void);

/**
 * Spearman rank correlation of two equal-length samples.
 *
 * # Safety
 * `x` and `y` must point to `len` readable doubles; `out` must be a valid
 * destination for one double.
 */
enum RubricStatus rubric_spearman(const double *x, const double *y, size_t len, double *out);

/**
 * Quadratic-weighted kappa between two raters scoring on `1..=levels`.
 *
 * # Safety
 * `r1` and `r2` must point to `len` readable bytes; `out` must be a valid
 * destination for one double.
 */
enum RubricStatus rubric_weighted_kappa(const uint8_t *r1,
                                        const uint8_t *r2,
                                        size_t len,
                                        uint8_t levels,
                                        double *out);

/**
 * Quadratic-weighted kappa with a seeded item-bootstrap 95% interval.
 *
 * # Safety
 * `r1` and `r2` must point to `len` readable bytes; the three out
 * pointers must each be a valid destination for one double.
 */
enum RubricStatus rubric_kappa_ci(const uint8_t *r1,
                                  const uint8_t *r2,
                                  size_t len,
                                  uint8_t levels,
                                  size_t resamples,
                                  uint64_t seed,
                                  double *out_kappa,
                                  double *out_low,
                                  double *out_high);

/**
 * AUROC of `scores` against binary `labels` (0 or 1), ties counted half.
 *
 * # Safety
 * `scores` must point to `len` readable doubles and `labels` to `len`
 * readable bytes; `out` must be a valid destination for one double.
 */
enum RubricStatus rubric_auroc(const double *scores,
                               const uint8_t *labels,
                               size_t len,
                               double *out);

/**
 * AUROC with a DeLong confidence interval at the given `level`
 * (for example 0.95).
 *
 * # Safety
 * `scores` must point to `len` readable doubles and `labels` to `len`
 * readable bytes; the three out pointers must each be a valid
 * destination for one double.
 */
enum RubricStatus rubric_auroc_ci(const double *scores,
                                  const uint8_t *labels,
                                  size_t len,
                                  double level,
                                  double *out_auroc,
                                  double *out_low,
                                  double *out_high);

/**
 * DeLong test for the AUROC difference of two score vectors over the
 * same labels. Writes the difference (a minus b), its 95% interval, and
 * the two-sided p-value.
 *
 * # Safety
 * `scores_a` and `scores_b` must point to `len` readable doubles and
 * `labels` to `len` readable bytes; the four out pointers must each be a
 * valid destination for one double.
 */
enum RubricStatus rubric_delong_paired(const double *scores_a,
                                       const double *scores_b,
                                       const uint8_t *labels,
                                       size_t len,
                                       double *out_delta,
                                       double *out_low,
                                       double *out_high,
                                       double *out_p);

/**
 * Rate ratios with 95% intervals from a Poisson mixed model with one
 * random intercept per group.
 *
 * `outcome` holds `n_rows` nonnegative counts, `features` is row-major
 * `n_rows` by `n_features`, and `groups` assigns each row to a group.
 * The three output arrays receive one value per feature. With
 * `standardize`, features are scaled first and ratios are per standard
 * deviation rather than per raw unit.
 *
 * # Safety
 * Input pointers must cover the stated extents; the out pointers must
 * each be valid destinations for `n_features` doubles.
 */
enum RubricStatus rubric_rate_ratios(const double *outcome,
                                     const double *features,
                                     const size_t *groups,
                                     size_t n_rows,
                                     size_t n_features,
                                     bool standardize,
                                     double *out_ratio,
                                     double *out_low,
                                     double *out_high);

/**
 * Loads a score matrix from the CSV layout written by the pipeline (the
 * mask sidecar next to it is honored). On success, writes a heap handle
 * to `out`; release it with [`rubric_score_matrix_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid
 * destination for one pointer.
 */
enum RubricStatus rubric_score_matrix_read_csv(const char *path, struct RubricScoreMatrix **out);

/**
 * Releases a handle from [`rubric_score_matrix_read_csv`]. Null is a
 * no-op.
 *
 * # Safety
 * `matrix` must be a handle from this library that has not been freed.
 */
void rubric_score_matrix_free(struct RubricScoreMatrix *matrix);

/**
 * Number of instance rows, or 0 for a null handle.
 *
 * # Safety
 * `matrix` must be null or a live handle from this library.
 */
size_t rubric_score_matrix_instances(const struct RubricScoreMatrix *matrix);

/**
 * Number of rubric dimension columns, or 0 for a null handle.
 *
 * # Safety
 * `matrix` must be null or a live handle from this library.
 */
size_t rubric_score_matrix_dimensions(const struct RubricScoreMatrix *matrix);

/**
 * The score at (`row`, `col`): 1 through 5 when present, 0 when masked,
 * -1 when the handle is null or the position is out of range.
 *
 * # Safety
 * `matrix` must be null or a live handle from this library.
 */
int32_t rubric_score_matrix_get(const struct RubricScoreMatrix *matrix, size_t row, size_t col);

/**
 * The instance id for a row, or null when out of range. The pointer is
 * owned by the handle and stays valid until the handle is freed.
 *
 * # Safety
 * `matrix` must be null or a live handle from this library.
 */
const char *rubric_score_matrix_instance_id(const struct RubricScoreMatrix *matrix, size_t row);

/**
 * The dimension name for a column, or null when out of range. The
 * pointer is owned by the handle and stays valid until the handle is
 * freed.
 *
 * # Safety
 * `matrix` must be null or a live handle from this library.
 */
const char *rubric_score_matrix_dimension(const struct RubricScoreMatrix *matrix, size_t col);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RUBRIC_H */
