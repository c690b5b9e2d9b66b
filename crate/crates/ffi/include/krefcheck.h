#ifndef KREFCHECK_H
#define KREFCHECK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum KcStatus {
  KC_STATUS_OK = 0,
  KC_STATUS_NULL_ARGUMENT = 1,
  KC_STATUS_INVALID_UTF8 = 2,
  KC_STATUS_INVALID_OPTION = 3,
  /**
   * Parsing, validation, harness or engine setup failed.
   */
  KC_STATUS_PIPELINE = 4,
  KC_STATUS_PANIC = 5,
} KcStatus;

/**
 * Verdict of a finished check; the values match the CLI exit codes
 * except that timeout and unknown are kept apart.
 */
typedef enum KcVerdict {
  KC_VERDICT_SAFE = 0,
  KC_VERDICT_BUG = 1,
  KC_VERDICT_TIMEOUT = 2,
  KC_VERDICT_UNKNOWN = 3,
} KcVerdict;

/**
 * Check configuration. Create with `kc_options_new`.
 */
typedef struct KcOptions KcOptions;

/**
 * Outcome of `kc_check`. Free with `kc_report_free`.
 */
typedef struct KcReport KcReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on this thread.
 */
const char *kc_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *kc_version(void);

/**
 * Allocates default options into `*out`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum KcStatus kc_options_new(struct KcOptions **out);

/**
 * # Safety
 * `opts` must be null or a handle from `kc_options_new` not yet freed.
 */
void kc_options_free(struct KcOptions *opts);

/**
 * Selects the engine by name: "enum", "bmc" or "chc".
 *
 * # Safety
 * `opts` must be a live handle; `engine` a nul-terminated string.
 */
enum KcStatus kc_options_set_engine(struct KcOptions *opts, const char *engine);

/**
 * Sets the entry function; null selects it automatically.
 *
 * # Safety
 * `opts` must be a live handle; `entry` null or a nul-terminated string.
 */
enum KcStatus kc_options_set_entry(struct KcOptions *opts, const char *entry);

/**
 * Loop bound for the bmc engine; must be at least 1.
 *
 * # Safety
 * `opts` must be a live handle.
 */
enum KcStatus kc_options_set_bound(struct KcOptions *opts, uint32_t bound);

/**
 * Number of values each nondeterministic integer ranges over; at least 1.
 *
 * # Safety
 * `opts` must be a live handle.
 */
enum KcStatus kc_options_set_domain(struct KcOptions *opts, uint32_t domain);

/**
 * Step budget of the explicit engines.
 *
 * # Safety
 * `opts` must be a live handle.
 */
enum KcStatus kc_options_set_budget(struct KcOptions *opts, uint64_t budget);

/**
 * # Safety
 * `opts` must be a live handle.
 */
enum KcStatus kc_options_set_slice(struct KcOptions *opts, bool slice);

/**
 * # Safety
 * `opts` must be a live handle.
 */
enum KcStatus kc_options_set_underflow_check(struct KcOptions *opts, bool on);

/**
 * Horn solver command with a `{file}` placeholder, and its timeout in
 * milliseconds. A null command disables the chc engine.
 *
 * # Safety
 * `opts` must be a live handle; `cmd` null or a nul-terminated string.
 */
enum KcStatus kc_options_set_solver(struct KcOptions *opts, const char *cmd, uint64_t timeout_ms);

/**
 * Checks the KIR program `text`; `driver` names it in the report. On
 * success `*out` receives a report handle.
 *
 * # Safety
 * `text` and `driver` must be nul-terminated strings, `opts` null (for
 * defaults) or a live handle, and `out` valid for writes.
 */
enum KcStatus kc_check(const char *text,
                       const char *driver,
                       const struct KcOptions *opts,
                       struct KcReport **out);

/**
 * # Safety
 * `report` must be null or a handle from `kc_check` not yet freed.
 */
void kc_report_free(struct KcReport *report);

/**
 * # Safety
 * `report` must be a live handle and `out` valid for writes.
 */
enum KcStatus kc_report_verdict(const struct KcReport *report, enum KcVerdict *out);

/**
 * Process exit status the CLI would return for this report, or -1 when
 * `report` is null.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
int32_t kc_report_exit_code(const struct KcReport *report);

/**
 * Machine-readable report; owned by the handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *kc_report_json(const struct KcReport *report);

/**
 * Human-readable report; owned by the handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *kc_report_text(const struct KcReport *report);

/**
 * Writes the SMT-LIB Horn script for `text` into `*out`. Release it with
 * `kc_string_free`.
 *
 * # Safety
 * Same contract as `kc_check`.
 */
enum KcStatus kc_emit_chc(const char *text,
                          const char *driver,
                          const struct KcOptions *opts,
                          char **out);

/**
 * # Safety
 * `s` must be null or a string returned by `kc_emit_chc` not yet freed.
 */
void kc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KREFCHECK_H */
