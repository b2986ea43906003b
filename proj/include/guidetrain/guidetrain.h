/* Copyright 2026 The guidetrain Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the guidetrain library.
 *
 * Every function returns a gt_status. On failure the message of the most
 * recent error on the calling thread is available from gt_last_error().
 * Handles are opaque; each *_create / *_load has a matching *_free that
 * accepts NULL. Strings returned through char** are owned by the caller and
 * released with gt_string_free. */

#ifndef GUIDETRAIN_GUIDETRAIN_H_
#define GUIDETRAIN_GUIDETRAIN_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GT_API __declspec(dllexport)
#else
#define GT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gt_status {
  GT_OK = 0,
  GT_ERR_INVALID_ARGUMENT = 1,
  GT_ERR_IO = 2,
  GT_ERR_NUMERIC = 3,
  GT_ERR_MISSING_ARTIFACT = 4,
  GT_ERR_CONFIG = 5,
  GT_ERR_INTERNAL = 6
} gt_status;

/* Stable lower-case name: "ok", "invalid_argument", "io", ... */
GT_API const char* gt_status_name(gt_status status);
/* Message of the last failure on this thread; "" when none. */
GT_API const char* gt_last_error(void);
GT_API const char* gt_version(void);
GT_API void gt_string_free(char* text);

/* --- Configuration ------------------------------------------------------ */

typedef struct gt_config gt_config;

GT_API gt_status gt_config_create_default(gt_config** out);
GT_API gt_status gt_config_load(const char* path, gt_config** out);
GT_API gt_status gt_config_parse(const char* json_text, gt_config** out);
GT_API gt_status gt_config_set_seed(gt_config* config, uint64_t seed);
GT_API gt_status gt_config_set_jobs(gt_config* config, int jobs);
GT_API gt_status gt_config_seed(const gt_config* config, uint64_t* out);
/* Full configuration, every field explicit. */
GT_API gt_status gt_config_to_json(const gt_config* config, char** out_text);
GT_API void gt_config_free(gt_config* config);

/* --- Pipeline runs ------------------------------------------------------ */

typedef enum gt_stage {
  GT_STAGE_DATAGEN = 0,
  GT_STAGE_TRAIN_VAE = 1,
  GT_STAGE_TRAIN_HPPN = 2,
  GT_STAGE_TRAIN_BASELINE = 3,
  GT_STAGE_TRAIN_POLICY_G_ONLY = 4,
  GT_STAGE_TRAIN_POLICY_G_PLUS_H = 5,
  GT_STAGE_EVALUATE = 6,
  GT_STAGE_REPORT = 7,
  GT_STAGE_ALL = 8
} gt_stage;

/* Progress messages; called on the thread running the stage. */
typedef void (*gt_log_fn)(const char* message, void* user_data);

typedef struct gt_run gt_run;

/* Copies the configuration; the run directory is created on demand. */
GT_API gt_status gt_run_create(const gt_config* config, const char* out_dir, gt_log_fn log,
                               void* user_data, gt_run** out);
GT_API gt_status gt_run_stage(gt_run* run, gt_stage stage);
GT_API void gt_run_free(gt_run* run);

/* --- Metrics ------------------------------------------------------------ */

/* Points are interleaved x0, y0, x1, y1, ...; counts are point counts. */
GT_API gt_status gt_discrete_frechet(const double* p, size_t p_count, const double* q,
                                     size_t q_count, double* out);
GT_API gt_status gt_spectral_arc_length(const double* speed, size_t count,
                                        double sample_rate, double cutoff_freq,
                                        int pad_factor, double* out);

#ifdef __cplusplus
}
#endif

#endif /* GUIDETRAIN_GUIDETRAIN_H_ */
