#ifndef TSFORECAST_H
#define TSFORECAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum TsfStatus {
  TSF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  TSF_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range or not valid UTF-8.
   */
  TSF_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The series or file contents were rejected.
   */
  TSF_STATUS_DATA = 3,
  /**
   * The model configuration or model file was rejected.
   */
  TSF_STATUS_CONFIG = 4,
  /**
   * Training or evaluation produced non-finite values or failed to converge.
   */
  TSF_STATUS_NUMERICAL = 5,
  /**
   * A file could not be read or written.
   */
  TSF_STATUS_IO = 6,
  /**
   * A panic was caught at the boundary.
   */
  TSF_STATUS_PANIC = 7,
} TsfStatus;

/**
 * Opaque handle to a trained forecaster.
 */
typedef struct TsfModel TsfModel;

/**
 * Opaque handle to a time series.
 */
typedef struct TsfSeries TsfSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *tsf_version(void);

/**
 * Message for the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into the library on this thread.
 */
const char *tsf_last_error(void);

/**
 * Seasonal synthetic series: level + amplitude·sin(2πt/period) + trend·t + N(0, noise²).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum TsfStatus tsf_series_generate(size_t length,
                                   double period,
                                   double amplitude,
                                   double level,
                                   double trend,
                                   double noise,
                                   uint64_t seed,
                                   struct TsfSeries **out);

/**
 * Copies `len` values into a new series.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be writable.
 */
enum TsfStatus tsf_series_from_values(const double *values, size_t len, struct TsfSeries **out);

/**
 * Reads a `week,value` CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TsfStatus tsf_series_load_csv(const char *path, struct TsfSeries **out);

/**
 * Number of observations, or 0 for a null handle.
 *
 * # Safety
 * `series` must be null or a live handle.
 */
size_t tsf_series_len(const struct TsfSeries *series);

/**
 * Copies the observations into `buf`, which must hold at least `tsf_series_len` values.
 *
 * # Safety
 * `series` must be a live handle and `buf` must point to `buf_len` writable doubles.
 */
enum TsfStatus tsf_series_values(const struct TsfSeries *series, double *buf, size_t buf_len);

/**
 * # Safety
 * `series` must be null or a handle not yet freed.
 */
void tsf_series_free(struct TsfSeries *series);

/**
 * Root mean squared error of two equal-length arrays.
 *
 * # Safety
 * Both arrays must hold `len` readable doubles; `out` must be writable.
 */
enum TsfStatus tsf_rmse(const double *observed, const double *predicted, size_t len, double *out);

/**
 * Mean absolute error of two equal-length arrays.
 *
 * # Safety
 * Both arrays must hold `len` readable doubles; `out` must be writable.
 */
enum TsfStatus tsf_mae(const double *observed, const double *predicted, size_t len, double *out);

/**
 * Trains a model on the chronological 60/20/20 split of `series`.
 *
 * `family` is one of `arima`, `mlp`, `lstm`, `gru`, `tcn`. `config` is a JSON5 object of
 * overrides on the family defaults, or null for the defaults.
 *
 * # Safety
 * `family` and non-null `config` must be NUL-terminated; `series` must be a live handle;
 * `out` must be writable.
 */
enum TsfStatus tsf_model_train(const char *family,
                               const char *config,
                               const struct TsfSeries *series,
                               struct TsfModel **out);

/**
 * Forecasts `steps` values past the end of `history` (raw units), feeding predictions back.
 *
 * # Safety
 * `model` must be a live handle, `history` must hold `history_len` doubles and `out`
 * must have room for `steps` doubles.
 */
enum TsfStatus tsf_model_forecast(const struct TsfModel *model,
                                  const double *history,
                                  size_t history_len,
                                  size_t steps,
                                  double *out);

/**
 * Serialized model as an owned JSON string; release it with [`tsf_string_free`].
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum TsfStatus tsf_model_to_json(const struct TsfModel *model, char **out);

/**
 * # Safety
 * `model` must be a live handle and `path` NUL-terminated.
 */
enum TsfStatus tsf_model_save(const struct TsfModel *model, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum TsfStatus tsf_model_load(const char *path, struct TsfModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void tsf_model_free(struct TsfModel *model);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void tsf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSFORECAST_H */
