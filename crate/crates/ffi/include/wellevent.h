/* C bindings for wellevent: per-minute undesired-event scoring. */

#pragma once

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible FFI call.
 */
typedef enum WeStatus {
  WE_STATUS_OK = 0,
  WE_STATUS_NULL_ARGUMENT = 1,
  WE_STATUS_INVALID_UTF8 = 2,
  WE_STATUS_LOAD_FAILED = 3,
  WE_STATUS_SHAPE_MISMATCH = 4,
  WE_STATUS_INVALID_VALUE = 5,
  WE_STATUS_SCORE_FAILED = 6,
  WE_STATUS_INTERNAL = 7,
} WeStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct WeModel {
  uint8_t _private[0];
} WeModel;

/**
 * Opaque handle to a streaming scorer; owns a one-window buffer.
 */
typedef struct WeStream {
  uint8_t _private[0];
} WeStream;

/**
 * Message for the most recent failure on this thread. Never null; owned
 * by the library and overwritten by the next failing call.
 */
const char *we_last_error_message(void);

/**
 * Rows per scoring window (one minute of per-second samples).
 */
size_t we_window_len(void);

/**
 * Load a saved model file (forest or TCN; the format is sniffed). On
 * success writes a handle into `out` which must be released with
 * `we_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum WeStatus we_model_load(const char *path, struct WeModel **out);

/**
 * Release a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must have come from `we_model_load` and not been freed before.
 */
void we_model_free(struct WeModel *model);

/**
 * Model kind: 0 for the random forest, 1 for the TCN, -1 for null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
int we_model_kind(const struct WeModel *model);

/**
 * Number of sensor channels the model consumes, or -1 for null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
int we_model_channel_count(const struct WeModel *model);

/**
 * Name of channel `index`, or null when out of range. The pointer is a
 * thread-local copy overwritten by the next call on the same thread, so
 * copy the string out before calling again.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
const char *we_model_channel_name(const struct WeModel *model, size_t index);

/**
 * Score one raw window: `values` is row-major `rows x cols` with
 * `rows == we_window_len()` and `cols == we_model_channel_count(model)`.
 *
 * # Safety
 * `model` must be a live handle; `values` must point to `rows * cols`
 * doubles; `out_score` must be a valid pointer.
 */
enum WeStatus we_model_score_window(const struct WeModel *model,
                                    const double *values,
                                    size_t rows,
                                    size_t cols,
                                    double *out_score);

/**
 * Create a streaming scorer over a loaded model. The stream holds its own
 * reference; the model handle may be freed first.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum WeStatus we_stream_new(const struct WeModel *model, struct WeStream **out);

/**
 * Push one per-second sample (raw channel values in model order). When the
 * sample completes a window, `*out_ready` is set to 1, `*out_score`
 * receives the window score, and the buffer resets; otherwise `*out_ready`
 * is 0.
 *
 * # Safety
 * `stream` must be a live handle; `row` must point to `len` doubles;
 * `out_score` and `out_ready` must be valid pointers.
 */
enum WeStatus we_stream_push(struct WeStream *stream,
                             const double *row,
                             size_t len,
                             double *out_score,
                             int *out_ready);

/**
 * Release a streaming scorer. Null is a no-op.
 *
 * # Safety
 * `stream` must have come from `we_stream_new` and not been freed before.
 */
void we_stream_free(struct WeStream *stream);
