#ifndef DUALSPACE_H
#define DUALSPACE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_ARGUMENT = 2,
  DS_STATUS_SHAPE_MISMATCH = 3,
  DS_STATUS_NON_FINITE = 4,
  DS_STATUS_IO = 5,
  DS_STATUS_FORMAT = 6,
  DS_STATUS_DIVERGED = 7,
  DS_STATUS_CONFIG = 8,
  DS_STATUS_PANIC = 9,
  // A pipeline phase failed; see the message.
  DS_STATUS_RUNTIME = 10,
} DsStatus;

typedef struct DsAutoencoder DsAutoencoder;

typedef struct DsDataset DsDataset;

typedef struct DsGan DsGan;

// Autoencoder training options. Hidden layers all have width
// `hidden_width`; `hidden_layers = 0` gives a linear autoencoder.
typedef struct DsAeOptions {
  size_t latent_dim;
  size_t hidden_width;
  size_t hidden_layers;
  size_t epochs;
  size_t batch_size;
  double learning_rate;
  uint64_t seed;
} DsAeOptions;

// GAN training options; generator and discriminator share the hidden
// layout.
typedef struct DsGanOptions {
  size_t epochs;
  size_t batch_size;
  size_t noise_dim;
  size_t hidden_width;
  size_t hidden_layers;
  size_t d_steps_per_g_step;
  double learning_rate;
  uint64_t seed;
} DsGanOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *ds_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ds_version(void);

// Gaussian-ring mixture with `n_modes` modes on a circle of `radius`.
//
// # Safety
// `out` must be valid for one pointer write.
enum DsStatus ds_dataset_ring(size_t n_modes,
                              double radius,
                              double sigma,
                              size_t n,
                              uint64_t seed,
                              struct DsDataset **out);

// Wrap a row-major matrix (copied).
//
// # Safety
// `values` must point to `rows * cols` doubles; `out` must be writable.
enum DsStatus ds_dataset_from_matrix(const double *values,
                                     size_t rows,
                                     size_t cols,
                                     struct DsDataset **out);

// Apply a hold-out rule such as `labels:3` or `rotation:60..120`.
//
// # Safety
// `ds` must be a live dataset handle; `rule` a NUL-terminated string.
enum DsStatus ds_dataset_holdout(struct DsDataset *ds, const char *rule);

// # Safety
// `ds` must be a live dataset handle; the out pointers must be writable.
enum DsStatus ds_dataset_shape(const struct DsDataset *ds,
                               size_t *rows,
                               size_t *cols,
                               size_t *heldout);

// Copy the samples into `out` (capacity `cap` doubles, row-major).
//
// # Safety
// `ds` must be a live handle; `out` must hold `cap` doubles.
enum DsStatus ds_dataset_samples(const struct DsDataset *ds, double *out, size_t cap);

// # Safety
// `ds` must be NULL or a handle not yet freed.
void ds_dataset_free(struct DsDataset *ds);

// Ring defaults.
struct DsAeOptions ds_ae_options_default(void);

// Train on the held-in rows of `ds`.
//
// # Safety
// `ds` must be a live handle, `opts` readable, `out` writable.
enum DsStatus ds_autoencoder_train(const struct DsDataset *ds,
                                   const struct DsAeOptions *opts,
                                   struct DsAutoencoder **out);

// # Safety
// `ae` must be a live handle; the out pointers must be writable.
enum DsStatus ds_autoencoder_dims(const struct DsAutoencoder *ae,
                                  size_t *data_dim,
                                  size_t *latent_dim);

// Standardized latent codes of `rows` samples; writes `rows * latent_dim`
// doubles.
//
// # Safety
// Buffers must match the stated sizes.
enum DsStatus ds_autoencoder_encode(const struct DsAutoencoder *ae,
                                    const double *x,
                                    size_t rows,
                                    size_t cols,
                                    double *out,
                                    size_t cap);

// Decode standardized codes; writes `rows * data_dim` doubles.
//
// # Safety
// Buffers must match the stated sizes.
enum DsStatus ds_autoencoder_decode(const struct DsAutoencoder *ae,
                                    const double *z,
                                    size_t rows,
                                    size_t cols,
                                    double *out,
                                    size_t cap);

// # Safety
// `ae` must be NULL or a handle not yet freed.
void ds_autoencoder_free(struct DsAutoencoder *ae);

// Ring defaults.
struct DsGanOptions ds_gan_options_default(void);

// Train a GAN on a row-major matrix of real samples.
//
// # Safety
// `real` must hold `rows * cols` doubles; `opts` readable; `out` writable.
enum DsStatus ds_gan_train(const double *real,
                           size_t rows,
                           size_t cols,
                           const struct DsGanOptions *opts,
                           struct DsGan **out);

// # Safety
// `g` must be a live handle; `space_dim` writable.
enum DsStatus ds_gan_space_dim(const struct DsGan *g, size_t *space_dim);

// `k` generator samples; writes `k * space_dim` doubles.
//
// # Safety
// `g` must be a live handle; `out` must hold `cap` doubles.
enum DsStatus ds_gan_sample(const struct DsGan *g,
                            size_t k,
                            uint64_t seed,
                            double *out,
                            size_t cap);

// # Safety
// `g` must be NULL or a handle not yet freed.
void ds_gan_free(struct DsGan *g);

// Biased RBF MMD². `bandwidth <= 0` selects the median heuristic.
//
// # Safety
// `x` holds `n * dim`, `y` holds `m * dim` doubles; `out` writable.
enum DsStatus ds_mmd_rbf(const double *x,
                         size_t n,
                         const double *y,
                         size_t m,
                         size_t dim,
                         double bandwidth,
                         double *out);

// Covered-mode fraction; `counts` (may be NULL) receives `k` per-mode
// counts.
//
// # Safety
// `samples` holds `n * dim`, `centers` holds `k * dim` doubles; `fraction`
// writable; `counts` NULL or `k` writable entries.
enum DsStatus ds_mode_coverage(const double *samples,
                               size_t n,
                               const double *centers,
                               size_t k,
                               size_t dim,
                               double sigma,
                               size_t min_count,
                               double *fraction,
                               size_t *counts);

// Fraction of references within `tau` of some generated row.
//
// # Safety
// `generated` holds `n * dim`, `refs` holds `m * dim` doubles; `out`
// writable.
enum DsStatus ds_holdout_recall(const double *generated,
                                size_t n,
                                const double *refs,
                                size_t m,
                                size_t dim,
                                double tau,
                                double *out);

// Run an experiment like `dualspace run`. `config_path` may be NULL;
// `arm` is `"dual"`, `"direct"` or `"both"`.
//
// # Safety
// String arguments must be NULL (where allowed) or NUL-terminated.
enum DsStatus ds_run_pipeline(const char *config_path, const char *arm, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALSPACE_H */
