#ifndef MASHUP_H
#define MASHUP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call. Codes 2 to 4 match the command-line exit codes.
 */
typedef enum MashupStatus {
  MASHUP_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MASHUP_STATUS_NULL_ARGUMENT = 1,
  /**
   * Inputs failed validation.
   */
  MASHUP_STATUS_INVALID = 2,
  /**
   * Search could not produce a sequence.
   */
  MASHUP_STATUS_INFEASIBLE = 3,
  MASHUP_STATUS_IO = 4,
  /**
   * A string argument was not valid UTF-8.
   */
  MASHUP_STATUS_UTF8 = 5,
  /**
   * The engine panicked; the handle arguments should be freed.
   */
  MASHUP_STATUS_PANIC = 6,
} MashupStatus;

typedef struct MashupConfig MashupConfig;

typedef struct MashupLibrary MashupLibrary;

typedef struct MashupProfile MashupProfile;

/**
 * Output of one pipeline run, held as serialized text.
 */
typedef struct MashupRun MashupRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *mashup_last_error(void);

/**
 * Library version as a static string.
 */
const char *mashup_version(void);

/**
 * # Safety
 * `s` must be null or a string returned through an out-parameter of this
 * library that has not been freed.
 */
void mashup_string_free(char *s);

/**
 * Loads and validates a feature archive directory.
 *
 * # Safety
 * `dir` must be a nul-terminated string; `out` must be writable.
 */
enum MashupStatus mashup_library_load(const char *dir, struct MashupLibrary **out);

/**
 * # Safety
 * `lib` must be null or a live handle from [`mashup_library_load`].
 */
void mashup_library_free(struct MashupLibrary *lib);

/**
 * Number of shots, 0 for a null handle.
 *
 * # Safety
 * `lib` must be null or a live handle.
 */
uintptr_t mashup_library_shot_count(const struct MashupLibrary *lib);

/**
 * Loads and validates a music profile file.
 *
 * # Safety
 * `file` must be a nul-terminated string; `out` must be writable.
 */
enum MashupStatus mashup_profile_load(const char *file, struct MashupProfile **out);

/**
 * # Safety
 * `profile` must be null or a live handle from [`mashup_profile_load`].
 */
void mashup_profile_free(struct MashupProfile *profile);

/**
 * Number of beats, 0 for a null handle.
 *
 * # Safety
 * `profile` must be null or a live handle.
 */
uintptr_t mashup_profile_beat_count(const struct MashupProfile *profile);

/**
 * Engine configuration from JSON text; null `json` gives the defaults.
 *
 * # Safety
 * `json` must be null or a nul-terminated string; `out` must be writable.
 */
enum MashupStatus mashup_config_new(const char *json, struct MashupConfig **out);

/**
 * # Safety
 * `config` must be null or a live handle from [`mashup_config_new`].
 */
void mashup_config_free(struct MashupConfig *config);

/**
 * Runs the whole pipeline with the built-in planner. `plan_json` optionally
 * replaces the structural plan.
 *
 * # Safety
 * Handles must be live; `plan_json` null or nul-terminated; `out` writable.
 */
enum MashupStatus mashup_run(const struct MashupLibrary *lib,
                             const struct MashupProfile *profile,
                             const struct MashupConfig *config,
                             const char *plan_json,
                             struct MashupRun **out);

/**
 * # Safety
 * `run` must be null or a live handle from [`mashup_run`].
 */
void mashup_run_free(struct MashupRun *run);

/**
 * EDL as JSON, borrowed from `run`; null for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
const char *mashup_run_edl(const struct MashupRun *run);

/**
 * Metric report as JSON, borrowed from `run`.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
const char *mashup_run_report(const struct MashupRun *run);

/**
 * Run log, one JSON object per line, borrowed from `run`.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
const char *mashup_run_log(const struct MashupRun *run);

/**
 * Recomputes the metric report of an EDL given as JSON text.
 *
 * # Safety
 * Handles must be live; `edl_json` nul-terminated; `out` writable. The
 * string stored in `out` is freed with [`mashup_string_free`].
 */
enum MashupStatus mashup_report_edl(const struct MashupLibrary *lib,
                                    const struct MashupProfile *profile,
                                    const struct MashupConfig *config,
                                    const char *edl_json,
                                    char **out);

/**
 * Shell script that renders an EDL. `media_json` holds `music` and
 * `sources` (source id to video path).
 *
 * # Safety
 * Strings must be nul-terminated; `out` writable. The string stored in
 * `out` is freed with [`mashup_string_free`].
 */
enum MashupStatus mashup_render_commands(const char *edl_json,
                                         const char *media_json,
                                         const char *output,
                                         char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MASHUP_H */
