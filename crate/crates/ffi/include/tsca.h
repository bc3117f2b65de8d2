#ifndef TSCA_H
#define TSCA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Encoder size presets for `tsca_model_init`.
 */
typedef enum TscaPreset {
  TSCA_PRESET_DEFAULT = 0,
  TSCA_PRESET_COMPACT = 1,
  TSCA_PRESET_TINY = 2,
} TscaPreset;

/**
 * Status codes returned by every fallible function.
 */
typedef enum TscaStatus {
  TSCA_STATUS_OK = 0,
  TSCA_STATUS_NULL_POINTER = 1,
  TSCA_STATUS_INVALID_ARGUMENT = 2,
  TSCA_STATUS_FORMAT = 3,
  TSCA_STATUS_IO = 4,
  TSCA_STATUS_BAD_MAGIC = 5,
  TSCA_STATUS_TRUNCATED = 6,
  TSCA_STATUS_SHAPE_MISMATCH = 7,
  TSCA_STATUS_CHECKPOINT_HEADER = 8,
  TSCA_STATUS_NUMERICAL = 9,
  TSCA_STATUS_CONFIG = 10,
  TSCA_STATUS_BUFFER_TOO_SMALL = 11,
  TSCA_STATUS_PANIC = 12,
} TscaStatus;

/**
 * Opaque model handle.
 */
typedef struct TscaModel TscaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *tsca_last_error_message(void);

/**
 * Loads a checkpoint file.
 */
enum TscaStatus tsca_model_load(const char *path, struct TscaModel **out);

/**
 * Freshly initialized (untrained) model; `preset` is a `TscaPreset` value.
 */
enum TscaStatus tsca_model_init(uint32_t preset, uint64_t seed, struct TscaModel **out);

enum TscaStatus tsca_model_save(const struct TscaModel *m, const char *path);

/**
 * Releases a handle; null is ignored.
 */
void tsca_model_free(struct TscaModel *m);

/**
 * Input length the encoder expects; 0 for a null handle.
 */
size_t tsca_model_seq_len(const struct TscaModel *m);

size_t tsca_model_embedding_dim(const struct TscaModel *m);

size_t tsca_model_projection_dim(const struct TscaModel *m);

size_t tsca_model_num_params(const struct TscaModel *m);

/**
 * Z-normalizes and resamples `values` to `out_len` points.
 */
enum TscaStatus tsca_canonicalize(const double *values, size_t len, double *out, size_t out_len);

/**
 * Backbone embedding of one canonical series of `tsca_model_seq_len` points.
 */
enum TscaStatus tsca_model_encode(const struct TscaModel *m,
                                  const double *series,
                                  size_t len,
                                  double *out,
                                  size_t out_cap);

/**
 * Projector output for one canonical series.
 */
enum TscaStatus tsca_model_project(const struct TscaModel *m,
                                   const double *series,
                                   size_t len,
                                   double *out,
                                   size_t out_cap);

/**
 * Contrastive accuracy on `n` canonical series stored row-major, each of
 * `tsca_model_seq_len` points.
 */
enum TscaStatus tsca_model_contrastive_accuracy(const struct TscaModel *m,
                                                const double *series,
                                                size_t n,
                                                size_t len,
                                                size_t draws,
                                                size_t eval_batch,
                                                uint64_t seed,
                                                double *out);

enum TscaStatus tsca_cosine_similarity(const double *a, const double *b, size_t len, double *out);

/**
 * InfoNCE of a row-major `b`×`b` similarity matrix with positives on the diagonal.
 */
enum TscaStatus tsca_info_nce(const double *sim, size_t b, double temperature, double *out);

enum TscaStatus tsca_pearson(const double *xs, const double *ys, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSCA_H */
