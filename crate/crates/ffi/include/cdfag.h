#ifndef CDFAG_H
#define CDFAG_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; the nonzero error classes match the CLI exit codes.
 */
typedef enum CdfagStatus {
  CDFAG_STATUS_OK = 0,
  CDFAG_STATUS_INVALID_ARGUMENT = 1,
  CDFAG_STATUS_CONFIG = 2,
  CDFAG_STATUS_DATA = 3,
  CDFAG_STATUS_NUMERICAL = 4,
  CDFAG_STATUS_PANIC = 5,
} CdfagStatus;

typedef enum CdfagDomain {
  CDFAG_DOMAIN_SOURCE = 0,
  CDFAG_DOMAIN_TARGET = 1,
} CdfagDomain;

/**
 * A trained pipeline.
 */
typedef struct CdfagPipeline CdfagPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *cdfag_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cdfag_version(void);

/**
 * Loads a pipeline model file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CdfagStatus cdfag_pipeline_load(const char *path, struct CdfagPipeline **out);

/**
 * Trains from two feature CSV files. `config` holds `key=value` lines and
 * may be null for defaults.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be a valid pointer.
 */
enum CdfagStatus cdfag_pipeline_train(const char *source_csv,
                                      const char *target_csv,
                                      const char *config,
                                      struct CdfagPipeline **out);

/**
 * Writes the pipeline to `path`.
 *
 * # Safety
 * `pipeline` must come from this library; `path` must be NUL-terminated.
 */
enum CdfagStatus cdfag_pipeline_save(const struct CdfagPipeline *pipeline, const char *path);

/**
 * Raw feature width expected for `domain`.
 *
 * # Safety
 * `pipeline` must come from this library; `out` must be a valid pointer.
 */
enum CdfagStatus cdfag_pipeline_input_dim(const struct CdfagPipeline *pipeline,
                                          enum CdfagDomain domain,
                                          size_t *out);

/**
 * Number of classes the pipeline predicts.
 *
 * # Safety
 * `pipeline` must come from this library; `out` must be a valid pointer.
 */
enum CdfagStatus cdfag_pipeline_class_count(const struct CdfagPipeline *pipeline, size_t *out);

/**
 * Predicts labels for `rows` row-major samples of width `cols` from
 * `domain`, writing `rows` labels to `labels`.
 *
 * # Safety
 * `data` must hold `rows * cols` doubles and `labels` room for `rows`
 * values.
 */
enum CdfagStatus cdfag_pipeline_predict(const struct CdfagPipeline *pipeline,
                                        enum CdfagDomain domain,
                                        const double *data,
                                        size_t rows,
                                        size_t cols,
                                        size_t *labels);

/**
 * Releases a pipeline. Null is ignored.
 *
 * # Safety
 * `pipeline` must come from this library and not be used afterwards.
 */
void cdfag_pipeline_free(struct CdfagPipeline *pipeline);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDFAG_H */
