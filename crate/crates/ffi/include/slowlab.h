#ifndef SLOWLAB_H
#define SLOWLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SlStatus {
  SL_STATUS_OK = 0,
  SL_STATUS_NULL_POINTER = 1,
  SL_STATUS_INVALID_ARGUMENT = 2,
  SL_STATUS_SHAPE_MISMATCH = 3,
  SL_STATUS_DEGENERATE = 4,
  SL_STATUS_NUMERICAL = 5,
  SL_STATUS_IO = 6,
  SL_STATUS_FORMAT = 7,
  SL_STATUS_BUFFER_TOO_SMALL = 8,
  SL_STATUS_PANIC = 9,
} SlStatus;

// A trained estimator.
typedef struct SlModel SlModel;

// Time-paired samples (`prev`, `next`), each `len x dim`.
typedef struct SlPairs SlPairs;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sl_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `capacity > 0`). Returns the full message
// length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or valid for `capacity` bytes.
size_t sl_last_error_message(char *buf, size_t capacity);

// Samples `count` source pairs: `prev ~ N(0, I)`, `next = prev + eps` with
// generalized-Laplace `eps` of shape `alpha` and rate `lambda`.
//
// # Safety
// `out` must be a valid pointer to writable handle storage.
enum SlStatus sl_pairs_generate(size_t dim,
                                double alpha,
                                double lambda,
                                size_t count,
                                uint64_t seed,
                                struct SlPairs **out);

// Builds pairs from two `rows x cols` buffers (copied).
//
// # Safety
// `prev` and `next` must hold `rows * cols` doubles; `out` must be writable.
enum SlStatus sl_pairs_new(const double *prev,
                           const double *next,
                           size_t rows,
                           size_t cols,
                           struct SlPairs **out);

// Applies a random orthogonal mixing (drawn from `seed`) to both slices.
//
// # Safety
// `pairs` must be a live handle; `out` must be writable.
enum SlStatus sl_pairs_mix_orthogonal(const struct SlPairs *pairs,
                                      uint64_t seed,
                                      struct SlPairs **out);

// Number of pairs, or 0 for a null handle.
//
// # Safety
// `pairs` must be null or a live handle.
size_t sl_pairs_len(const struct SlPairs *pairs);

// Columns per sample, or 0 for a null handle.
//
// # Safety
// `pairs` must be null or a live handle.
size_t sl_pairs_dim(const struct SlPairs *pairs);

// Copies `prev` and `next` into caller buffers of `capacity` doubles each.
//
// # Safety
// `pairs` must be a live handle; the buffers must hold `capacity` doubles.
enum SlStatus sl_pairs_copy(const struct SlPairs *pairs,
                            double *prev_out,
                            double *next_out,
                            size_t capacity);

// Releases a pairs handle; null is ignored.
//
// # Safety
// `pairs` must be null or a handle not yet freed.
void sl_pairs_free(struct SlPairs *pairs);

// Trains a linear SlowFlow with Laplace transition rate `lambda`.
//
// # Safety
// `pairs` must be a live handle; `out` must be writable.
enum SlStatus sl_train_slowflow(const struct SlPairs *pairs,
                                double lambda,
                                size_t steps,
                                double lr,
                                uint64_t seed,
                                struct SlModel **out);

// Trains a linear SlowVAE with KL weight `gamma` and transition rate `lambda`.
//
// # Safety
// `pairs` must be a live handle; `out` must be writable.
enum SlStatus sl_train_slowvae(const struct SlPairs *pairs,
                               size_t latent_dim,
                               double gamma,
                               double lambda,
                               size_t steps,
                               double lr,
                               uint64_t seed,
                               struct SlModel **out);

// Width of the model's latent codes, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t sl_model_latent_dim(const struct SlModel *model);

// Encodes `rows x cols` observations into `rows x latent_dim` codes
// (posterior means for the VAE).
//
// # Safety
// `x` must hold `rows * cols` doubles and `out` `capacity` doubles.
enum SlStatus sl_model_encode(const struct SlModel *model,
                              const double *x,
                              size_t rows,
                              size_t cols,
                              double *out,
                              size_t capacity);

// Writes a checkpoint directory.
//
// # Safety
// `model` must be a live handle and `dir` a NUL-terminated UTF-8 path.
enum SlStatus sl_model_save(const struct SlModel *model, const char *dir, uint64_t seed);

// Loads a checkpoint directory written by `sl_model_save` or the CLI.
//
// # Safety
// `dir` must be a NUL-terminated UTF-8 path; `out` must be writable.
enum SlStatus sl_model_load(const char *dir, struct SlModel **out);

// Releases a model handle; null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void sl_model_free(struct SlModel *model);

// Mean correlation coefficient (0..100) between `rows x latent_cols`
// latents and `rows x factor_cols` factors; Spearman unless `pearson`.
//
// # Safety
// The buffers must hold the stated number of doubles; `score` must be writable.
enum SlStatus sl_mcc(const double *latents,
                     const double *factors,
                     size_t rows,
                     size_t latent_cols,
                     size_t factor_cols,
                     bool pearson,
                     double *score);

// Maximum-likelihood generalized-Laplace fit of `n` samples.
//
// # Safety
// `data` must hold `n` doubles; every output pointer must be writable.
enum SlStatus sl_genlap_fit(const double *data,
                            size_t n,
                            double *alpha,
                            double *rate,
                            double *location,
                            double *loglik);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLOWLAB_H */
