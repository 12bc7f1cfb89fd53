#ifndef NSCI_CD_H
#define NSCI_CD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NsciStatus {
  NSCI_STATUS_OK = 0,
  NSCI_STATUS_NULL_POINTER = 1,
  NSCI_STATUS_INVALID_ARGUMENT = 2,
  NSCI_STATUS_IO = 3,
  NSCI_STATUS_FORMAT = 4,
  NSCI_STATUS_SHAPE = 5,
  NSCI_STATUS_DEGENERATE_TRAINING = 6,
  NSCI_STATUS_EMPTY_INPUT = 7,
  NSCI_STATUS_INTERNAL = 8,
} NsciStatus;

typedef enum NsciScaling {
  /**
   * Round and clamp to 8 bits.
   */
  NSCI_SCALING_CLAMP = 0,
  /**
   * Stretch the global min/max onto 8 bits.
   */
  NSCI_SCALING_NORMALIZE = 1,
  /**
   * 32-bit floats in the SDF format.
   */
  NSCI_SCALING_RAW_FLOAT = 2,
} NsciScaling;

/**
 * A per-pixel descriptor volume.
 */
typedef struct NsciFeatures NsciFeatures;

/**
 * A trained random forest.
 */
typedef struct NsciForest NsciForest;

/**
 * A multiband raster, band-sequential.
 */
typedef struct NsciRaster NsciRaster;

typedef struct NsciCfogParams {
  size_t orientations;
  double sigma;
  double epsilon;
  /**
   * One descriptor per band, concatenated, instead of one of the band mean.
   */
  bool per_band;
} NsciCfogParams;

typedef struct NsciNeighborhoodParams {
  size_t nsci_window;
  size_t template_size;
  size_t search_size;
  double variance_floor;
  /**
   * Take the matching template from the second stack instead of the first.
   */
  bool template_from_second;
} NsciNeighborhoodParams;

typedef struct NsciForestParams {
  size_t trees;
  /**
   * 0 selects the square root of the feature count.
   */
  size_t mtry;
  /**
   * 0 means unlimited.
   */
  size_t max_depth;
  size_t min_leaf;
  uint64_t seed;
  bool bootstrap;
} NsciForestParams;

typedef struct NsciMetrics {
  double oa;
  double fa;
  double md;
  double kc;
} NsciMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *nsci_last_error_message(void);

/**
 * Copies `width * height * bands` band-sequential samples into a new raster.
 *
 * # Safety
 * `data` must point to that many readable doubles and `out` must be writable.
 */
enum NsciStatus nsci_raster_new(size_t width,
                                size_t height,
                                size_t bands,
                                const double *data,
                                struct NsciRaster **out);

/**
 * Reads a PGM, PNG, TIFF or SDF file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum NsciStatus nsci_raster_load(const char *path, struct NsciRaster **out);

/**
 * Writes a raster; 8-bit modes pick the encoding from the file extension.
 *
 * # Safety
 * `raster` must be a live handle and `path` a NUL-terminated string.
 */
enum NsciStatus nsci_raster_save(const struct NsciRaster *raster,
                                 const char *path,
                                 enum NsciScaling scaling);

/**
 * # Safety
 * `raster` must be a live handle; each output pointer may be NULL.
 */
enum NsciStatus nsci_raster_dims(const struct NsciRaster *raster,
                                 size_t *width,
                                 size_t *height,
                                 size_t *bands);

/**
 * Copies all samples, band-sequential, into `out` of exactly `len` doubles.
 *
 * # Safety
 * `raster` must be a live handle and `out` must hold `len` writable doubles.
 */
enum NsciStatus nsci_raster_copy_data(const struct NsciRaster *raster, double *out, size_t len);

/**
 * # Safety
 * `raster` must be NULL or a handle not yet freed.
 */
void nsci_raster_free(struct NsciRaster *raster);

struct NsciCfogParams nsci_cfog_params_default(void);

/**
 * Structure descriptor of a raster.
 *
 * # Safety
 * `raster` must be a live handle, `params` readable and `out` writable.
 */
enum NsciStatus nsci_cfog_extract(const struct NsciRaster *raster,
                                  const struct NsciCfogParams *params,
                                  struct NsciFeatures **out);

/**
 * # Safety
 * `features` must be a live handle; each output pointer may be NULL.
 */
enum NsciStatus nsci_features_dims(const struct NsciFeatures *features,
                                   size_t *width,
                                   size_t *height,
                                   size_t *depth);

/**
 * Copies the channel-major descriptor values into `out` of exactly `len` doubles.
 *
 * # Safety
 * `features` must be a live handle and `out` must hold `len` writable doubles.
 */
enum NsciStatus nsci_features_copy_data(const struct NsciFeatures *features,
                                        double *out,
                                        size_t len);

/**
 * # Safety
 * `features` must be NULL or a handle not yet freed.
 */
void nsci_features_free(struct NsciFeatures *features);

struct NsciNeighborhoodParams nsci_neighborhood_params_default(void);

/**
 * Per-pixel correlation `r`, slope `a` and intercept `b`, each written
 * row-major into a buffer of `len = width * height` doubles.
 *
 * # Safety
 * Both handles must be live, `params` readable, and each output buffer must
 * hold `len` writable doubles.
 */
enum NsciStatus nsci_nsci(const struct NsciFeatures *first,
                          const struct NsciFeatures *second,
                          const struct NsciNeighborhoodParams *params,
                          double *r,
                          double *a,
                          double *b,
                          size_t len);

/**
 * Per-pixel matching error written row-major into `len = width * height` doubles.
 *
 * # Safety
 * Both handles must be live, `params` readable and `me` must hold `len`
 * writable doubles.
 */
enum NsciStatus nsci_matching_error(const struct NsciFeatures *first,
                                    const struct NsciFeatures *second,
                                    const struct NsciNeighborhoodParams *params,
                                    double *me,
                                    size_t len);

struct NsciForestParams nsci_forest_params_default(void);

/**
 * Trains on `n_samples` row-major feature vectors of `n_features` values
 * with labels 0 (unchanged) or 1 (changed).
 *
 * # Safety
 * `features` must hold `n_samples * n_features` doubles, `labels` must hold
 * `n_samples` bytes, `params` must be readable and `out` writable.
 */
enum NsciStatus nsci_forest_train(const double *features,
                                  const uint8_t *labels,
                                  size_t n_samples,
                                  size_t n_features,
                                  const struct NsciForestParams *params,
                                  struct NsciForest **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum NsciStatus nsci_forest_load(const char *path, struct NsciForest **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum NsciStatus nsci_forest_save(const struct NsciForest *model, const char *path);

/**
 * Feature count the model expects, or 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t nsci_forest_n_features(const struct NsciForest *model);

/**
 * Majority vote for one feature vector; `votes` receives the unchanged
 * and changed tree counts when not NULL.
 *
 * # Safety
 * `model` must be a live handle, `x` must hold `n_features` doubles, `class`
 * must be writable and `votes`, if not NULL, must hold two writable values.
 */
enum NsciStatus nsci_forest_predict(const struct NsciForest *model,
                                    const double *x,
                                    size_t n_features,
                                    uint8_t *class_,
                                    size_t *votes);

/**
 * Classifies `n_rows` row-major vectors into `labels`.
 *
 * # Safety
 * `model` must be a live handle, `rows` must hold `n_rows` times the model's
 * feature count doubles and `labels` `n_rows` writable bytes.
 */
enum NsciStatus nsci_forest_predict_rows(const struct NsciForest *model,
                                         const double *rows,
                                         size_t n_rows,
                                         uint8_t *labels);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void nsci_forest_free(struct NsciForest *model);

/**
 * Accuracy percentages and kappa from confusion counts.
 *
 * # Safety
 * `out` must be writable.
 */
enum NsciStatus nsci_metrics(uint64_t tp,
                             uint64_t fp,
                             uint64_t fn_,
                             uint64_t tn,
                             struct NsciMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NSCI_CD_H */
