#ifndef BGMATTE_H
#define BGMATTE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BgmStatus {
  BGM_STATUS_OK = 0,
  BGM_STATUS_NULL_POINTER = 1,
  BGM_STATUS_SHAPE = 2,
  BGM_STATUS_DOMAIN = 3,
  BGM_STATUS_PARAMETER = 4,
  BGM_STATUS_DEGENERATE = 5,
  BGM_STATUS_CONFIG = 6,
  BGM_STATUS_IO = 7,
  BGM_STATUS_FORMAT = 8,
  BGM_STATUS_INVALID_UTF8 = 9,
  BGM_STATUS_PANIC = 10,
} BgmStatus;

/**
 * Opaque generator handle.
 */
typedef struct BgmGenerator BgmGenerator;

/**
 * Four matting errors over the unknown region.
 */
typedef struct BgmMetrics {
  double sad;
  double mse;
  double grad;
  double conn;
} BgmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Writes `alpha * fg + (1 - alpha) * bg` to `out`.
 *
 * # Safety
 * Pointers must be valid for the sizes implied by `height` and `width`.
 */
enum BgmStatus bgm_compose(const double *fg,
                           const double *bg,
                           const double *alpha,
                           size_t height,
                           size_t width,
                           double *out);

/**
 * Derives trimap labels from a matte with an unknown band of `band_radius` pixels.
 *
 * # Safety
 * `alpha` must hold `height * width` values and `labels_out` as many bytes.
 */
enum BgmStatus bgm_generate_trimap(const double *alpha,
                                   size_t height,
                                   size_t width,
                                   size_t band_radius,
                                   uint8_t *labels_out);

/**
 * SAD, MSE, GRAD and CONN of `pred` against `gt` over the unknown region.
 *
 * # Safety
 * `pred`, `gt` must hold `height * width` values, `trimap` as many bytes.
 */
enum BgmStatus bgm_evaluate_pair(const double *pred,
                                 const double *gt,
                                 const uint8_t *trimap,
                                 size_t height,
                                 size_t width,
                                 struct BgmMetrics *out);

/**
 * Loads the generator stored in a training checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum BgmStatus bgm_generator_load(const char *path, struct BgmGenerator **out);

/**
 * Predicts a matte from the composite, the (possibly distorted) background and trimap labels.
 *
 * # Safety
 * `generator` must come from [`bgm_generator_load`]; buffers must match the sizes.
 */
enum BgmStatus bgm_generator_predict(const struct BgmGenerator *generator,
                                     const double *composite,
                                     const double *background,
                                     const uint8_t *trimap,
                                     size_t height,
                                     size_t width,
                                     double *alpha_out);

/**
 * Releases a generator; null is ignored.
 *
 * # Safety
 * `generator` must be null or a live handle from [`bgm_generator_load`].
 */
void bgm_generator_free(struct BgmGenerator *generator);

/**
 * Copies the calling thread's last error message (NUL-terminated, truncated
 * to `len`) into `buf` and returns the untruncated length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` writes.
 */
size_t bgm_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BGMATTE_H */
