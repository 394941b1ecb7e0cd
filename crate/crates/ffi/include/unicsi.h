/* C interface for the unicsi CSI feedback autoencoder library. */

#ifndef UNICSI_H
#define UNICSI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum UnicsiStatus {
  UnicsiStatus_Ok = 0,
  UnicsiStatus_NullPointer = 1,
  UnicsiStatus_InvalidArgument = 2,
  UnicsiStatus_IoError = 3,
  UnicsiStatus_BadData = 4,
} UnicsiStatus;

/**
 * Encoder families addressable through the C ABI.
 */
typedef enum UnicsiApproach {
  UnicsiApproach_Naive = 0,
  UnicsiApproach_Saldr = 1,
  UnicsiApproach_Masked = 2,
} UnicsiApproach;

/**
 * Opaque handle around a multi-rate autoencoder bundle.
 */
typedef struct UnicsiBundle UnicsiBundle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *unicsi_version(void);

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *unicsi_last_error(void);

/**
 * Map a resource-block count to its category transform size.
 *
 * # Safety
 * `ifft_size_out` must be null or point to a writable u32.
 */
enum UnicsiStatus unicsi_categorize(uint32_t k, uint32_t *ifft_size_out);

/**
 * Zero-pad a K-bin frequency response and move it to the delay domain.
 * `out` receives the real plane then the imaginary plane and must hold
 * `2 * ifft_size(K)` values (see [`unicsi_categorize`]).
 *
 * # Safety
 * `re` and `im` must point to `k` readable f64 values and `out` to
 * `out_len` writable f64 values; the ranges must not overlap.
 */
enum UnicsiStatus unicsi_to_delay(const double *re,
                                  const double *im,
                                  uintptr_t k,
                                  double *out,
                                  uintptr_t out_len);

/**
 * Inverse of [`unicsi_to_delay`]: forward transform and crop to K bins.
 * `delay` holds `delay_len = 2 * N` values (N a supported transform
 * size); `scale` is the normalization factor to reapply (1.0 if none).
 *
 * # Safety
 * `delay` must point to `delay_len` readable f64 values; `out_re` and
 * `out_im` must each point to `k` writable f64 values.
 */
enum UnicsiStatus unicsi_from_delay(const double *delay,
                                    uintptr_t delay_len,
                                    double scale,
                                    uintptr_t k,
                                    double *out_re,
                                    double *out_im);

/**
 * Normalized mean squared error between two equal-length vectors.
 *
 * # Safety
 * `h` and `h_hat` must point to `len` readable f64 values and `out` to a
 * writable f64.
 */
enum UnicsiStatus unicsi_nmse(const double *h, const double *h_hat, uintptr_t len, double *out);

/**
 * Build a freshly initialized (untrained) bundle for the category that
 * serves `k` resource blocks, supporting the given latent sizes.
 *
 * # Safety
 * `lambdas` must point to `n_lambdas` readable u32 values; `out` must be
 * a writable handle slot.
 */
enum UnicsiStatus unicsi_bundle_build(enum UnicsiApproach approach,
                                      uint32_t k,
                                      const uint32_t *lambdas,
                                      uintptr_t n_lambdas,
                                      uint64_t seed,
                                      struct UnicsiBundle **out);

/**
 * Load a bundle from a checkpoint file.
 *
 * # Safety
 * `path` must be a readable NUL-terminated string; `out` must be a
 * writable handle slot.
 */
enum UnicsiStatus unicsi_bundle_load(const char *path, struct UnicsiBundle **out);

/**
 * Save a bundle to a checkpoint file.
 *
 * # Safety
 * `bundle` must be a live handle; `path` a writable NUL-terminated path.
 */
enum UnicsiStatus unicsi_bundle_save(const struct UnicsiBundle *bundle, const char *path);

/**
 * Release a handle returned by a `unicsi_bundle_*` constructor. A null
 * pointer is a no-op.
 *
 * # Safety
 * `bundle` must be null or a handle not yet freed.
 */
void unicsi_bundle_free(struct UnicsiBundle *bundle);

/**
 * Encoder input length (2 * transform size); 0 for a null handle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
uintptr_t unicsi_bundle_input_len(const struct UnicsiBundle *bundle);

/**
 * Number of supported latent sizes; 0 for a null handle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
uintptr_t unicsi_bundle_lambda_count(const struct UnicsiBundle *bundle);

/**
 * The i-th supported latent size (ascending); 0 if out of range.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
uint32_t unicsi_bundle_lambda_at(const struct UnicsiBundle *bundle, uintptr_t index);

/**
 * UE-side parameter count (encoders plus compression chain).
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
uint64_t unicsi_bundle_encoder_params(const struct UnicsiBundle *bundle);

/**
 * Deterministic flop count of one encode at the given latent size.
 *
 * # Safety
 * `bundle` must be a live handle and `out` writable.
 */
enum UnicsiStatus unicsi_bundle_encode_flops(const struct UnicsiBundle *bundle,
                                             uint32_t lambda,
                                             uint64_t *out);

/**
 * Length of the latent produced for `lambda`: the full width for the
 * masked approach (zeros past lambda), exactly lambda otherwise.
 *
 * # Safety
 * `bundle` must be a live handle and `out` writable.
 */
enum UnicsiStatus unicsi_bundle_latent_len(const struct UnicsiBundle *bundle,
                                           uint32_t lambda,
                                           uintptr_t *out);

/**
 * Compress one delay-domain input (length [`unicsi_bundle_input_len`])
 * into the latent for `lambda`. `out_len` must match
 * [`unicsi_bundle_latent_len`].
 *
 * # Safety
 * `input` must point to `input_len` readable f64 values and `out` to
 * `out_len` writable f64 values.
 */
enum UnicsiStatus unicsi_bundle_encode(const struct UnicsiBundle *bundle,
                                       const double *input,
                                       uintptr_t input_len,
                                       uint32_t lambda,
                                       double *out,
                                       uintptr_t out_len);

/**
 * Reconstruct a delay-domain vector from a latent produced by
 * [`unicsi_bundle_encode`]. `out_len` must equal the encoder input length.
 *
 * # Safety
 * `latent` must point to `latent_len` readable f64 values and `out` to
 * `out_len` writable f64 values.
 */
enum UnicsiStatus unicsi_bundle_decode(const struct UnicsiBundle *bundle,
                                       const double *latent,
                                       uintptr_t latent_len,
                                       uint32_t lambda,
                                       double *out,
                                       uintptr_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNICSI_H */
