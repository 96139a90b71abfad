#ifndef FOGBENCH_H
#define FOGBENCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FbStatus {
  FB_STATUS_OK = 0,
  FB_STATUS_NULL_ARGUMENT = 1,
  FB_STATUS_INVALID_UTF8 = 2,
  FB_STATUS_INVALID_INPUT = 3,
  FB_STATUS_CONFIG = 4,
  FB_STATUS_PROTOCOL = 5,
  FB_STATUS_SCENARIO = 6,
  FB_STATUS_EXHAUSTED = 7,
  FB_STATUS_IO = 8,
  FB_STATUS_PANIC = 9,
} FbStatus;

typedef enum FbOutcome {
  FB_OUTCOME_REACHED = 0,
  FB_OUTCOME_COLLIDED = 1,
  FB_OUTCOME_STUCK = 2,
  FB_OUTCOME_ROUTE_VIOLATION = 3,
  FB_OUTCOME_TIMEOUT = 4,
} FbOutcome;

/**
 * Counters and trace of one finished episode.
 */
typedef struct FbRunStats FbRunStats;

/**
 * A validated scenario.
 */
typedef struct FbScenario FbScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *fb_last_error(void);

/**
 * Parses and validates a scenario from JSON.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a writable pointer.
 */
enum FbStatus fb_scenario_from_json(const char *json, struct FbScenario **out);

/**
 * Overrides the fog visibility (m) of a scenario. Infinity means clear air.
 *
 * # Safety
 * `scenario` must come from `fb_scenario_from_json`.
 */
enum FbStatus fb_scenario_set_mor(struct FbScenario *scenario, double mor);

/**
 * # Safety
 * `scenario` must come from `fb_scenario_from_json` or be null.
 */
void fb_scenario_free(struct FbScenario *scenario);

/**
 * Runs one closed-loop episode with direct calls.
 *
 * `sim_json` is an optional simulator config; null selects the defaults.
 *
 * # Safety
 * `scenario` must be a live handle, `sim_json` null or nul-terminated, and
 * `out` writable.
 */
enum FbStatus fb_run_episode(const struct FbScenario *scenario,
                             const char *sim_json,
                             struct FbRunStats **out);

/**
 * # Safety
 * `stats` must be a live handle.
 */
enum FbOutcome fb_stats_outcome(const struct FbRunStats *stats);

/**
 * # Safety
 * `stats` must be a live handle.
 */
uintptr_t fb_stats_frames(const struct FbRunStats *stats);

/**
 * Writes the false-positive, false-negative and fog-noise counts.
 *
 * # Safety
 * `stats` must be a live handle; output pointers may be null.
 */
void fb_stats_counts(const struct FbRunStats *stats,
                     uintptr_t *n_fp,
                     uintptr_t *n_fn,
                     uintptr_t *n_fog);

/**
 * Smallest ego-to-NPC centre distance (m) over the episode.
 *
 * # Safety
 * `stats` must be a live handle.
 */
double fb_stats_d_min(const struct FbRunStats *stats);

/**
 * Serialises the stats, trace included, to JSON. Release with `fb_string_free`.
 *
 * # Safety
 * `stats` must be a live handle and `out` writable.
 */
enum FbStatus fb_stats_to_json(const struct FbRunStats *stats, char **out);

/**
 * # Safety
 * `stats` must come from `fb_run_episode` or be null.
 */
void fb_stats_free(struct FbRunStats *stats);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void fb_string_free(char *s);

/**
 * Runs a campaign from its JSON config and writes its artifacts.
 * `exit_status` receives the command-line exit code (0, 1, 2 or 3), also
 * when the config is rejected.
 *
 * # Safety
 * `config_json` must be nul-terminated; `exit_status` may be null.
 */
enum FbStatus fb_run_campaign(const char *config_json, int32_t *exit_status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOGBENCH_H */
