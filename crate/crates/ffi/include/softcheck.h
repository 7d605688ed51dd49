#ifndef SOFTCHECK_H
#define SOFTCHECK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SoftcheckStatus {
  SOFTCHECK_STATUS_OK = 0,
  SOFTCHECK_STATUS_NULL_POINTER = 1,
  SOFTCHECK_STATUS_INVALID_UTF8 = 2,
  SOFTCHECK_STATUS_CONFIG = 3,
  SOFTCHECK_STATUS_SHAPE = 4,
  SOFTCHECK_STATUS_DATA = 5,
  SOFTCHECK_STATUS_NUMERIC = 6,
  SOFTCHECK_STATUS_SAMPLING = 7,
  SOFTCHECK_STATUS_PARSE = 8,
  SOFTCHECK_STATUS_UNDEFINED_CORRELATION = 9,
  SOFTCHECK_STATUS_IO = 10,
  SOFTCHECK_STATUS_PANIC = 11,
} SoftcheckStatus;

typedef enum SoftcheckChecksumKind {
  SOFTCHECK_CHECKSUM_KIND_LINEAR = 0,
  SOFTCHECK_CHECKSUM_KIND_SINUSOID = 1,
} SoftcheckChecksumKind;

/**
 * Opaque handle to a loaded model.
 */
typedef struct SoftcheckModel SoftcheckModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *softcheck_version(void);

/**
 * Message for the last failed call on this thread, or NULL if none.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *softcheck_last_error_message(void);

/**
 * Loads a model file and stores a new handle in `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SoftcheckStatus softcheck_model_load(const char *path, struct SoftcheckModel **out);

/**
 * Releases a handle from [`softcheck_model_load`]. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a live handle that is not used afterwards.
 */
void softcheck_model_free(struct SoftcheckModel *model);

/**
 * Number of input features `d`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SoftcheckStatus softcheck_model_input_dim(const struct SoftcheckModel *model, size_t *out);

/**
 * Number of predicted targets `k`, excluding the check node.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum SoftcheckStatus softcheck_model_output_dim(const struct SoftcheckModel *model, size_t *out);

/**
 * Runs the network on `n` row-major inputs of width `d`.
 *
 * Writes `n × k` normalized predictions to `y_hat` and `n` check node outputs to `c_hat`.
 *
 * # Safety
 * `x` must hold `n * d` values, `y_hat` room for `n * k`, `c_hat` room for `n`.
 */
enum SoftcheckStatus softcheck_model_forward(const struct SoftcheckModel *model,
                                             const double *x,
                                             size_t n,
                                             size_t d,
                                             double *y_hat,
                                             double *c_hat);

/**
 * Per-sample checksum errors `(C(ŷ) − Ĉ)²` using the model's own checksum.
 *
 * # Safety
 * `x` must hold `n * d` values and `errors` room for `n`.
 */
enum SoftcheckStatus softcheck_model_checksum_errors(const struct SoftcheckModel *model,
                                                     const double *x,
                                                     size_t n,
                                                     size_t d,
                                                     double *errors);

/**
 * Threshold below which a fraction `tn_rate` of `errors` falls.
 *
 * # Safety
 * `errors` must hold `n` values and `out` be writable.
 */
enum SoftcheckStatus softcheck_calibrate_threshold(const double *errors,
                                                   size_t n,
                                                   double tn_rate,
                                                   double *out);

/**
 * Fraction of OOD `errors` at or below `threshold`.
 *
 * # Safety
 * `errors` must hold `n` values and `out` be writable.
 */
enum SoftcheckStatus softcheck_fnr99(const double *errors, size_t n, double threshold, double *out);

/**
 * 1 when `checksum_error` exceeds `threshold` (flagged OOD), 0 otherwise.
 */
int softcheck_flag(double checksum_error, double threshold);

/**
 * Evaluates a checksum over `k` values. `w` is ignored for the linear kind.
 *
 * # Safety
 * `y` must hold `k` values and `out` be writable.
 */
enum SoftcheckStatus softcheck_checksum(enum SoftcheckChecksumKind kind,
                                        double w,
                                        const double *y,
                                        size_t k,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOFTCHECK_H */
