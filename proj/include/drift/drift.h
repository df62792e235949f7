#ifndef DRIFT_DRIFT_H
#define DRIFT_DRIFT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DRIFT_API __declspec(dllexport)
#else
#define DRIFT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every call returns a status; on failure drift_last_error() describes it. */
typedef enum drift_status {
  DRIFT_OK = 0,
  DRIFT_ERR_INTERNAL = 1,
  DRIFT_ERR_CONFIG = 2,   /* invalid configuration, with "<source>:<line>:<col>" */
  DRIFT_ERR_VERSION = 3,  /* unsupported checkpoint format version */
  DRIFT_ERR_CORRUPT = 4,  /* malformed checkpoint; message names the field */
  DRIFT_ERR_ARGUMENT = 5, /* invalid argument or call order */
  DRIFT_ERR_IO = 6        /* file could not be read or written */
} drift_status;

typedef struct drift_session drift_session;

DRIFT_API const char* drift_version(void);
/* Message of the last failed call on this thread; "" when none. */
DRIFT_API const char* drift_last_error(void);
/* Frees strings returned through char** outputs. NULL is ignored. */
DRIFT_API void drift_string_free(char* s);
/* 0: info and warnings on stderr (default), 1: warnings only, 2: silent. */
DRIFT_API void drift_set_log_level(int level);

/* Configuration. `text` is YAML (JSON accepted); `source` names it in diagnostics.
   `overrides` are "dotted.key=value" strings. DRIFT_SEED replaces the seed. */
DRIFT_API drift_status drift_config_resolve(const char* text, const char* source, const char* const* overrides,
                                            size_t n_overrides, char** json_out);

/* Sessions. */
DRIFT_API drift_status drift_session_create(const char* text, const char* source, const char* const* overrides,
                                            size_t n_overrides, drift_session** out);
DRIFT_API drift_status drift_session_load(const char* checkpoint_path, drift_session** out);
DRIFT_API void drift_session_destroy(drift_session* session);
/* Runs up to `units` steps (setup, one offline epoch or one online iteration each);
   units < 0 runs to completion. *done_out (optional) reports completion. */
DRIFT_API drift_status drift_session_advance(drift_session* session, long units, int* done_out);
DRIFT_API drift_status drift_session_save(const drift_session* session, const char* path);
DRIFT_API drift_status drift_session_weights_hash(const drift_session* session, uint64_t* out);
/* Aggregate metrics and resolved gate threshold as JSON. */
DRIFT_API drift_status drift_session_metrics_json(const drift_session* session, char** out);
DRIFT_API drift_status drift_session_epochs_csv(const drift_session* session, char** out);
DRIFT_API drift_status drift_session_checkpoints_csv(const drift_session* session, char** out);

/* Subcommands. */
DRIFT_API drift_status drift_train(const char* text, const char* source, const char* const* overrides,
                                   size_t n_overrides, const char* output_dir, const char* resume_path,
                                   long max_units, char** summary_json);
DRIFT_API drift_status drift_eval(const char* checkpoint_path, size_t episodes, uint64_t seed, int expert,
                                  const char* const* env_overrides, size_t n_overrides, char** json_out);
DRIFT_API drift_status drift_bench(const char* text, const char* source, const char* const* overrides,
                                   size_t n_overrides, const char* const* ranks, size_t n_ranks, size_t batches,
                                   char** csv_out);
DRIFT_API drift_status drift_sweep(const char* text, const char* source, const char* const* overrides,
                                   size_t n_overrides, const char* axis, const char* const* values, size_t n_values,
                                   size_t seeds, size_t jobs, char** csv_out);
/* has_midpoint == 0 uses the default midpoint (half of total_epochs). */
DRIFT_API drift_status drift_schedule_preview(const char* kind, int r_max, int r_min, int total_epochs,
                                              double steepness, int has_midpoint, double midpoint, char** csv_out);
DRIFT_API drift_status drift_checkpoint_inspect(const char* checkpoint_path, char** json_out);

#ifdef __cplusplus
}
#endif

#endif
