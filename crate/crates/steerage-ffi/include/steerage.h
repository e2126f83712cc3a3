#ifndef STEERAGE_H
#define STEERAGE_H

/* Generated by cbindgen from steerage-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. `Ok` is zero; everything else leaves a
 * message in `steerage_last_error`.
 */
typedef enum {
  STEERAGE_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  STEERAGE_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  STEERAGE_STATUS_INVALID_UTF8 = 2,
  STEERAGE_STATUS_SHAPE = 3,
  STEERAGE_STATUS_CONFIG = 4,
  STEERAGE_STATUS_CONTRACT = 5,
  STEERAGE_STATUS_PARSE = 6,
  STEERAGE_STATUS_HEADER = 7,
  STEERAGE_STATUS_MONOTONE = 8,
  STEERAGE_STATUS_TRAINING = 9,
  STEERAGE_STATUS_IO = 10,
  /**
   * An internal panic was caught at the boundary.
   */
  STEERAGE_STATUS_PANIC = 11,
} SteerageStatus;

/**
 * A driving log with its frames loaded and a train/test boundary.
 */
typedef struct SteerageDataset SteerageDataset;

/**
 * A trained (or freshly initialized) worker/manager pair.
 */
typedef struct SteerageModel SteerageModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; the empty string if
 * none. Valid until the next failing call on the same thread.
 */
const char *steerage_last_error(void);

/**
 * Crate version as a static NUL-terminated string.
 */
const char *steerage_version(void);

/**
 * Loads a driving log CSV and every referenced frame. Frames resolve
 * relative to the log's directory; `train_fraction` sets the split.
 *
 * # Safety
 * `log_path` must be NUL-terminated; `out` must be a valid pointer.
 */
SteerageStatus steerage_dataset_load(const char *log_path,
                                     double train_fraction,
                                     SteerageDataset **out);

/**
 * Generates a synthetic driving log under `dir`, then loads it like
 * `steerage_dataset_load`.
 *
 * # Safety
 * `dir` must be NUL-terminated; `out` must be a valid pointer.
 */
SteerageStatus steerage_dataset_synth(const char *dir,
                                      size_t n,
                                      uint64_t seed,
                                      size_t image_size,
                                      double noise,
                                      size_t m,
                                      double train_fraction,
                                      SteerageDataset **out);

/**
 * Number of records; 0 for NULL.
 *
 * # Safety
 * `ds` must be a live dataset handle or NULL.
 */
size_t steerage_dataset_len(const SteerageDataset *ds);

/**
 * First test index (records below it train); 0 for NULL.
 *
 * # Safety
 * `ds` must be a live dataset handle or NULL.
 */
size_t steerage_dataset_train_len(const SteerageDataset *ds);

/**
 * # Safety
 * `ds` must come from this library and not be freed twice; NULL is a no-op.
 */
void steerage_dataset_free(SteerageDataset *ds);

/**
 * Trains a model on the dataset. `config_text` holds `key=value` lines
 * (same keys as the run config's training section); `embedding_path` may
 * be NULL except for the centroid modes gt-tsne and pred-tsne.
 *
 * # Safety
 * `ds` must be a live dataset handle; strings NUL-terminated; `out` valid.
 */
SteerageStatus steerage_model_train(const SteerageDataset *ds,
                                    const char *config_text,
                                    const char *embedding_path,
                                    SteerageModel **out);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` must be a valid pointer.
 */
SteerageStatus steerage_model_load(const char *path, SteerageModel **out);

/**
 * # Safety
 * `model` must be a live model handle; `path` NUL-terminated.
 */
SteerageStatus steerage_model_save(const SteerageModel *model, const char *path);

/**
 * Training mode of the model as a static string (`none`, `gt-tsne`,
 * `pred-tsne`, or `learned`); NULL for a NULL model.
 *
 * # Safety
 * `model` must be a live model handle or NULL.
 */
const char *steerage_model_mode(const SteerageModel *model);

/**
 * Autoregressive rollout over the dataset's test split; writes the RMSE
 * and MAE of the predicted angles.
 *
 * # Safety
 * Handles must be live; `rmse` and `mae` must be valid pointers.
 */
SteerageStatus steerage_model_evaluate(const SteerageModel *model,
                                       const SteerageDataset *ds,
                                       double *rmse,
                                       double *mae);

/**
 * Autoregressive rollout over samples `start..end`; writes one predicted
 * angle per sample into `angles`, which must hold `end - start` doubles.
 *
 * # Safety
 * Handles must be live; `angles` must point to `end - start` doubles.
 */
SteerageStatus steerage_model_predict(const SteerageModel *model,
                                      const SteerageDataset *ds,
                                      size_t start,
                                      size_t end,
                                      double *angles);

/**
 * # Safety
 * `model` must come from this library and not be freed twice; NULL is a
 * no-op.
 */
void steerage_model_free(SteerageModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEERAGE_H */
