#ifndef QBATTERY_H
#define QBATTERY_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum QbStatus {
  QB_STATUS_OK = 0,
  QB_STATUS_NULL_POINTER = 1,
  QB_STATUS_INVALID_UTF8 = 2,
  // Rejected configuration or out-of-domain parameter.
  QB_STATUS_INVALID_INPUT = 3,
  // Integrator, eigensolver or convergence failure.
  QB_STATUS_NUMERICAL = 4,
  QB_STATUS_IO = 5,
  QB_STATUS_BUFFER_TOO_SMALL = 6,
  QB_STATUS_PANIC = 7,
} QbStatus;

// Recorded series of a [`QbTrace`].
typedef enum QbSeries {
  QB_SERIES_TIME = 0,
  QB_SERIES_DELTA_E = 1,
  // Average power under the spec's convention.
  QB_SERIES_POWER = 2,
  QB_SERIES_PHOTONS = 3,
  // `⟨Σσ^z⟩/N`; NaN for qutrits.
  QB_SERIES_SZ_PER_SITE = 4,
} QbSeries;

// Opaque validated run specification.
typedef struct QbSpec QbSpec;

// Opaque recorded trajectory.
typedef struct QbTrace QbTrace;

// Scalar results of one charging run.
typedef struct QbMetrics {
  double stable_energy;
  double max_power;
  double t_at_max_power;
  double max_trace_dev;
  size_t fock_cutoff;
} QbMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next failing call on the same thread.
const char *qb_last_error(void);

// Library version as a static NUL-terminated string.
const char *qb_version(void);

// Parses a TOML spec, applying `n_overrides` `key=value` strings, and
// validates it. On success `*out` receives a new handle.
//
// # Safety
// `toml` must be a valid NUL-terminated string; `overrides` must point to
// `n_overrides` such strings (or be null when `n_overrides` is 0); `out`
// must be writable.
enum QbStatus qb_spec_parse(const char *toml,
                            const char *const *overrides,
                            size_t n_overrides,
                            struct QbSpec **out);

// Normalized spec as TOML. Release the string with [`qb_string_free`].
//
// # Safety
// `spec` must be a live handle and `out` writable.
enum QbStatus qb_spec_to_toml(const struct QbSpec *spec, char **out);

// # Safety
// `spec` must be null or a handle from [`qb_spec_parse`] not yet freed.
void qb_spec_free(struct QbSpec *spec);

// # Safety
// `s` must be null or a string returned by this library not yet freed.
void qb_string_free(char *s);

// `E_s` and `P_max` of the spec's model and rates.
//
// # Safety
// `spec` must be a live handle and `out` writable.
enum QbStatus qb_run_metrics(const struct QbSpec *spec, struct QbMetrics *out);

// Full charging trajectory of the spec. On success `*out` receives a new
// handle.
//
// # Safety
// `spec` must be a live handle and `out` writable.
enum QbStatus qb_run_trace(const struct QbSpec *spec, struct QbTrace **out);

// Number of samples in the trace; 0 for a null handle.
//
// # Safety
// `trace` must be null or a live handle.
size_t qb_trace_len(const struct QbTrace *trace);

// Copies one series into `buf`, which must hold at least
// [`qb_trace_len`] values.
//
// # Safety
// `trace` must be a live handle and `buf` writable for `len` doubles.
enum QbStatus qb_trace_series(const struct QbTrace *trace,
                              enum QbSeries series,
                              double *buf,
                              size_t len);

// # Safety
// `trace` must be null or a handle from [`qb_run_trace`] not yet freed.
void qb_trace_free(struct QbTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QBATTERY_H */
