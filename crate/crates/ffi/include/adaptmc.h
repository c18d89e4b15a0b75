#ifndef ADAPTMC_H
#define ADAPTMC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum AmcStatus {
  AMC_STATUS_OK = 0,
  AMC_STATUS_NULL_POINTER = 1,
  AMC_STATUS_INVALID_UTF8 = 2,
  /**
   * The config failed to parse or validate.
   */
  AMC_STATUS_CONFIG = 3,
  /**
   * A model could not be built from a valid config.
   */
  AMC_STATUS_MODEL = 4,
  AMC_STATUS_IO = 5,
  AMC_STATUS_INVALID_ARGUMENT = 6,
  /**
   * The output buffer is shorter than required.
   */
  AMC_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * The run finished but a required diagnostic failed.
   */
  AMC_STATUS_DIAGNOSTIC_FAILED = 8,
  AMC_STATUS_PANIC = 9,
} AmcStatus;

/**
 * Parsed and validated experiment config.
 */
typedef struct AmcConfig AmcConfig;

/**
 * Trace of one chain replicate.
 */
typedef struct AmcTrace AmcTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *amc_version(void);

/**
 * Message for the last failed call on this thread, or null after a
 * successful call. Valid until the next `amc_*` call on the same thread.
 */
const char *amc_last_error_message(void);

/**
 * Parses and validates TOML config text. On success `*out` owns a new handle.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AmcStatus amc_config_parse(const char *text, struct AmcConfig **out);

/**
 * Reads and validates a TOML config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AmcStatus amc_config_load(const char *path, struct AmcConfig **out);

/**
 * # Safety
 * `config` must be null or a handle from `amc_config_parse`/`amc_config_load`
 * that has not been freed.
 */
void amc_config_free(struct AmcConfig *config);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum AmcStatus amc_config_set_seed(struct AmcConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum AmcStatus amc_config_set_steps(struct AmcConfig *config, uint64_t steps);

/**
 * Runs replicate `replicate` of the configured chain (seed, steps, burn-in
 * and snapshot cadence from the config). On success `*out` owns a new trace.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum AmcStatus amc_run_chain(const struct AmcConfig *config,
                             uint64_t replicate,
                             struct AmcTrace **out);

/**
 * Runs the full experiment and writes its artifacts to `out_dir`, or to the
 * config's `output` when `out_dir` is null. Returns
 * [`AmcStatus::DiagnosticFailed`] when a required check fails.
 *
 * # Safety
 * `config` must be a live handle; `out_dir` null or NUL-terminated.
 */
enum AmcStatus amc_run_experiment(const struct AmcConfig *config, const char *out_dir);

/**
 * Number of recorded steps; 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
uint64_t amc_trace_len(const struct AmcTrace *trace);

/**
 * State dimension; 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t amc_trace_dim(const struct AmcTrace *trace);

/**
 * Copies all samples row-major (`len × dim`) into `buf`, which must hold at
 * least `len · dim` values.
 *
 * # Safety
 * `trace` must be a live handle and `buf` valid for `buf_len` writes.
 */
enum AmcStatus amc_trace_copy_samples(const struct AmcTrace *trace, double *buf, size_t buf_len);

/**
 * Copies the final flattened parameter into `buf`; `*needed` receives its
 * length even when the buffer is too small.
 *
 * # Safety
 * `trace` must be a live handle, `buf` valid for `buf_len` writes and
 * `needed` null or valid.
 */
enum AmcStatus amc_trace_copy_final_theta(const struct AmcTrace *trace,
                                          double *buf,
                                          size_t buf_len,
                                          size_t *needed);

/**
 * Fraction of accepted proposals; NaN for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
double amc_trace_acceptance_rate(const struct AmcTrace *trace);

/**
 * Number of truncation exits; 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
uint64_t amc_trace_reinit_count(const struct AmcTrace *trace);

/**
 * Truncation level after the last step; 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
uint32_t amc_trace_final_kappa(const struct AmcTrace *trace);

/**
 * Writes the trace as CSV (`k, x_1..x_d, accepted, log_accept, kappa, nu, reinit`).
 *
 * # Safety
 * `trace` must be a live handle and `path` NUL-terminated.
 */
enum AmcStatus amc_trace_write_csv(const struct AmcTrace *trace, const char *path);

/**
 * # Safety
 * `trace` must be null or a handle from `amc_run_chain` that has not been freed.
 */
void amc_trace_free(struct AmcTrace *trace);

/**
 * Invariant law of the two-state chain whose flip probability depends on the
 * current state. Writes `(π1, π2)` to `out`.
 *
 * # Safety
 * `out` must be valid for two writes.
 */
enum AmcStatus amc_two_state_oracle(double theta1, double theta2, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPTMC_H */
