#ifndef PVGP_H
#define PVGP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PvgpStatus {
  PVGP_STATUS_OK = 0,
  PVGP_STATUS_NULL_POINTER = 1,
  PVGP_STATUS_INVALID_ARGUMENT = 2,
  PVGP_STATUS_PARSE = 3,
  PVGP_STATUS_NUMERICAL = 4,
  PVGP_STATUS_PANIC = 5,
} PvgpStatus;

/**
 * A parsed covariance kernel.
 */
typedef struct PvgpKernel PvgpKernel;

/**
 * A GP conditioned on training data.
 */
typedef struct PvgpModel PvgpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pvgp_last_error_message(void);

/**
 * Parse kernel text such as `periodic(matern12) + whitenoise()`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum PvgpStatus pvgp_kernel_parse(const char *text, struct PvgpKernel **out);

/**
 * # Safety
 * `kernel` must come from this library and not be freed twice. Null is a no-op.
 */
void pvgp_kernel_free(struct PvgpKernel *kernel);

/**
 * Canonical text of a kernel, with every parameter spelled out. Release
 * the string with [`pvgp_string_free`].
 *
 * # Safety
 * `kernel` must be a live handle and `out` writable.
 */
enum PvgpStatus pvgp_kernel_to_string(const struct PvgpKernel *kernel, char **out);

/**
 * # Safety
 * `s` must come from this library. Null is a no-op.
 */
void pvgp_string_free(char *s);

/**
 * Covariance between rows `xi` and `xj` of length `dim`. White noise
 * is added when the sample indices `i` and `j` are equal.
 *
 * # Safety
 * `xi` and `xj` must hold `dim` doubles each, `out` must be writable.
 */
enum PvgpStatus pvgp_kernel_eval(const struct PvgpKernel *kernel,
                                 const double *xi,
                                 const double *xj,
                                 size_t dim,
                                 size_t i,
                                 size_t j,
                                 double *out);

/**
 * Condition `kernel` on `n` rows of `dim` inputs `x` and targets `y`.
 *
 * # Safety
 * `x` must hold `n * dim` doubles, `y` `n` doubles, `out` must be writable.
 */
enum PvgpStatus pvgp_model_new(const struct PvgpKernel *kernel,
                               const double *x,
                               size_t n,
                               size_t dim,
                               const double *y,
                               struct PvgpModel **out);

/**
 * Fit the hyperparameters of `template` by maximum marginal likelihood
 * and condition the result on the data. Deterministic for a given seed.
 *
 * # Safety
 * As [`pvgp_model_new`].
 */
enum PvgpStatus pvgp_model_fit(const struct PvgpKernel *template_,
                               const double *x,
                               size_t n,
                               size_t dim,
                               const double *y,
                               size_t restarts,
                               uint64_t seed,
                               struct PvgpModel **out);

/**
 * # Safety
 * `model` must come from this library and not be freed twice. Null is a no-op.
 */
void pvgp_model_free(struct PvgpModel *model);

/**
 * Posterior mean and, when `variance` is not null, marginal variance of
 * the latent function at `m` query rows.
 *
 * # Safety
 * `query` must hold `m * dim` doubles; `mean` (and `variance` if given)
 * must have room for `m` doubles.
 */
enum PvgpStatus pvgp_model_predict(const struct PvgpModel *model,
                                   const double *query,
                                   size_t m,
                                   size_t dim,
                                   double *mean,
                                   double *variance);

/**
 * Log marginal likelihood of the training targets (after centring and
 * scaling) under the model's kernel.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum PvgpStatus pvgp_model_log_likelihood(const struct PvgpModel *model, double *out);

/**
 * Copy of the model's kernel as a new handle.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum PvgpStatus pvgp_model_kernel(const struct PvgpModel *model, struct PvgpKernel **out);

/**
 * Mean absolute error of two length-`n` series.
 *
 * # Safety
 * `actual` and `predicted` must hold `n` doubles, `out` must be writable.
 */
enum PvgpStatus pvgp_mae(const double *actual, const double *predicted, size_t n, double *out);

/**
 * OSGB36 latitude and longitude (degrees) to British National Grid metres.
 *
 * # Safety
 * `easting` and `northing` must be writable.
 */
enum PvgpStatus pvgp_latlon_to_bng(double lat, double lon, double *easting, double *northing);

/**
 * British National Grid metres to OSGB36 latitude and longitude.
 *
 * # Safety
 * `lat` and `lon` must be writable.
 */
enum PvgpStatus pvgp_bng_to_latlon(double easting, double northing, double *lat, double *lon);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PVGP_H */
