/*
 * Copyright 2026 The damp Authors
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

#ifndef DAMP_DAMP_H
#define DAMP_DAMP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DAMP_API __declspec(dllexport)
#else
#define DAMP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum damp_status {
  DAMP_OK = 0,
  DAMP_ERR_INVALID_ARGUMENT = 1,
  DAMP_ERR_INVALID_STATE = 2,
  DAMP_ERR_FORMAT = 3,
  DAMP_ERR_CONSISTENCY = 4,
  DAMP_ERR_CORRUPTION = 5,
  DAMP_ERR_VERSION = 6,
  DAMP_ERR_MISSING_CLASS = 7,
  DAMP_ERR_CONTAMINATION = 8,
  DAMP_ERR_INSUFFICIENT_DATA = 9,
  DAMP_ERR_DEGENERATE_FEATURE = 10,
  DAMP_ERR_CONFIG = 11,
  DAMP_ERR_DEPENDENCY = 12,
  DAMP_ERR_STALENESS = 13,
  DAMP_ERR_IO = 14,
  DAMP_ERR_NUMERIC = 15,
  DAMP_ERR_INTERNAL = 16
} damp_status;

typedef struct damp_model damp_model;
typedef struct damp_dataset damp_dataset;

DAMP_API const char* damp_version(void);
DAMP_API const char* damp_status_name(damp_status status);
/* Message of the last failure on the calling thread ("" when none). */
DAMP_API const char* damp_last_error(void);
/* Process exit code for a status: 0, 2 (config), 3 (data) or 4 (numeric). */
DAMP_API int damp_exit_code(damp_status status);

/* Pipeline commands: pretrain, unlearn, eval, continual, sweep-bias, report. */
typedef struct damp_options {
  const char* out_dir; /* NULL keeps the config value */
  int has_seed;
  uint64_t seed;
  const char* methods; /* comma separated, NULL keeps the config value */
  int adversarial;     /* -1 keeps the config value, 0 off, 1 on */
} damp_options;

DAMP_API void damp_options_init(damp_options* options);
DAMP_API damp_status damp_run(const char* command, const char* config_path,
                              const damp_options* options);

/* Models */
DAMP_API damp_status damp_model_build(const char* arch, int channels, int height, int width,
                                      int class_count, uint64_t seed, damp_model** out);
DAMP_API damp_status damp_model_load(const char* path, damp_model** out);
DAMP_API damp_status damp_model_save(const damp_model* model, const char* path);
DAMP_API void damp_model_free(damp_model* model);
DAMP_API damp_status damp_model_class_count(const damp_model* model, int* out);
/* Writes a NUL-terminated hex digest; `capacity` must cover it. */
DAMP_API damp_status damp_model_fingerprint(const damp_model* model, char* buffer,
                                            size_t capacity);
DAMP_API damp_status damp_model_train(damp_model* model, const damp_dataset* data, int epochs,
                                      double learning_rate, uint64_t seed);

/* Datasets */
DAMP_API damp_status damp_dataset_synthetic(int class_count, int per_class, int channels,
                                            int height, int width, double separation,
                                            double noise, uint64_t seed, int test_split,
                                            damp_dataset** out);
DAMP_API damp_status damp_dataset_from_manifest(const char* manifest_path, int test_split,
                                                damp_dataset** out);
DAMP_API void damp_dataset_free(damp_dataset* data);
DAMP_API damp_status damp_dataset_size(const damp_dataset* data, size_t* out);

/* Accuracy in percent over the samples whose label is in `classes`
   (all samples when `count` is 0). */
DAMP_API damp_status damp_accuracy(const damp_model* model, const damp_dataset* data,
                                   const int* classes, size_t count, double* out);

/* One-shot unlearning of `forget` using statistics from `train`. The trace
   JSON is written to `trace_path` unless it is NULL. */
DAMP_API damp_status damp_unlearn(const damp_model* model, const damp_dataset* train,
                                  const int* forget, size_t count, uint64_t seed,
                                  const char* trace_path, damp_model** out);

DAMP_API damp_status damp_cus(double retain, double newly_forgotten, double* out);

#ifdef __cplusplus
}
#endif

#endif
