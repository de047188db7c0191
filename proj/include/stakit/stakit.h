/* stakit C interface.
 *
 * Every call returns a stakit_status. On failure the thread-local last error
 * holds a message and a JSON record describing it. Strings handed out through
 * `char** out` parameters belong to the caller and are released with
 * stakit_string_free. Inputs are file paths; outputs are the text of the
 * corresponding artifact (JSON or JSON-lines). */
#ifndef STAKIT_STAKIT_H
#define STAKIT_STAKIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(STAKIT_BUILDING_LIBRARY)
#    define STAKIT_API __declspec(dllexport)
#  else
#    define STAKIT_API __declspec(dllimport)
#  endif
#else
#  define STAKIT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum stakit_status {
  STAKIT_OK = 0,
  STAKIT_E_INVALID_ARGUMENT = 1,
  STAKIT_E_DIMENSION_MISMATCH = 2,
  STAKIT_E_PARSE = 3,
  STAKIT_E_IO = 4,
  STAKIT_E_DOMAIN = 5,
  STAKIT_E_NOT_FOUND = 6,
  STAKIT_E_UNDEFINED = 7,
  STAKIT_E_INTERNAL = 99
} stakit_status;

typedef struct stakit_zone_db stakit_zone_db;

STAKIT_API const char* stakit_version(void);
STAKIT_API const char* stakit_status_name(stakit_status status);

/* Valid until the next failing call on the same thread. */
STAKIT_API const char* stakit_last_error(void);
/* {"error": <status name>, "message": ..., and for parse errors "file", "line", "field"} */
STAKIT_API const char* stakit_last_error_json(void);

STAKIT_API void stakit_string_free(char* s);

/* ---- environment-affordance database ---- */

STAKIT_API stakit_status stakit_zone_db_build(const char* clips_path, double theta, size_t history,
                                              stakit_zone_db** out);
STAKIT_API stakit_status stakit_zone_db_load(const char* zones_path, stakit_zone_db** out);
STAKIT_API stakit_status stakit_zone_db_save(const stakit_zone_db* db, const char* zones_path);
STAKIT_API stakit_status stakit_zone_db_to_json(const stakit_zone_db* db, char** out);
STAKIT_API stakit_status stakit_zone_db_zone_count(const stakit_zone_db* db, size_t* out);
STAKIT_API void stakit_zone_db_free(stakit_zone_db* db);

typedef struct stakit_afford_options {
  size_t k;
  int weighted;
  int rescale_to_unit;
} stakit_afford_options;

STAKIT_API stakit_afford_options stakit_afford_default_options(void);

/* Output: {"neighbours": [...], "nouns": {"vocab", "p"}, "verbs": {"vocab", "p"}} */
STAKIT_API stakit_status stakit_afford_query(const stakit_zone_db* db, const double* descriptor,
                                             size_t length, const stakit_afford_options* options,
                                             char** out);
STAKIT_API stakit_status stakit_afford_query_file(const stakit_zone_db* db,
                                                  const char* descriptor_path,
                                                  const stakit_afford_options* options, char** out);
/* Both inputs hold {"nouns": ..., "verbs": ...}; output has the same shape. */
STAKIT_API stakit_status stakit_afford_fuse(const char* affordance_path, const char* detector_path,
                                            char** out);
/* Fuses the distributions into every detection's class vectors (JSON-lines out). */
STAKIT_API stakit_status stakit_afford_apply(const char* detections_path,
                                             const char* distributions_path, char** out);

/* ---- hotspot re-weighting ---- */

STAKIT_API stakit_status stakit_hotspot_reweight(const char* detections_path, const char* maps_path,
                                                 int bilinear, char** out);

/* ---- evaluation ---- */

typedef struct stakit_eval_params {
  double iou_threshold;
  double ttc_tolerance;
  size_t top_k;
  unsigned jobs;
} stakit_eval_params;

STAKIT_API stakit_eval_params stakit_eval_default_params(void);
STAKIT_API stakit_status stakit_eval_sta(const char* detections_path, const char* ground_truth_path,
                                         const stakit_eval_params* params, char** out);
/* Output: {"deltas": [...]} with relative gains in percent (null for a zero baseline). */
STAKIT_API stakit_status stakit_eval_diff(const char* candidate_report_path,
                                          const char* baseline_report_path, char** out);
STAKIT_API stakit_status stakit_relative_gain(double candidate, double baseline, double* out);

/* ---- annotation curation ---- */

STAKIT_API stakit_status stakit_curate_ek(const char* boxes_csv_path, const char* segments_csv_path,
                                          double fps, long max_gap, const char* split, char** out);

/* ---- attention gradient check ---- */

typedef struct stakit_grad_check_options {
  uint64_t seed;
  double epsilon;
  size_t d_model;
  size_t heads;
  size_t tokens;
  size_t kv_tokens;
  size_t frames;
  int pooling_pre_norm;
} stakit_grad_check_options;

STAKIT_API stakit_grad_check_options stakit_grad_check_default_options(void);
/* `op`: "mha", "frame_guided_pooling" or "dual_attention". `weights_out` may be
 * NULL; otherwise it receives the problem's tensors as a weight file. */
STAKIT_API stakit_status stakit_grad_check(const char* op, const stakit_grad_check_options* options,
                                           char** report_out, char** weights_out);

/* ---- synthetic end-to-end run ---- */

typedef struct stakit_demo_options {
  uint64_t seed;
  size_t k;
  int weighted;
  int hotspot_first;
  unsigned jobs;
} stakit_demo_options;

STAKIT_API stakit_demo_options stakit_demo_default_options(void);
/* Output: the final EvalReport with extra "baseline" and "deltas" members. */
STAKIT_API stakit_status stakit_demo_synth(const stakit_demo_options* options, char** out);

#ifdef __cplusplus
}
#endif

#endif
