// Copyright 2026 The dtvit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DUALTOKEN_C_API_H_
#define DUALTOKEN_C_API_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define DTV_API __attribute__((visibility("default")))
#else
#define DTV_API
#endif

/* Status codes. Every int-returning call yields one of these; on failure
   dtv_last_error() holds a message for the calling thread. */
enum {
  DTV_OK = 0,
  DTV_ERR_SHAPE = 1,
  DTV_ERR_NONFINITE = 2,
  DTV_ERR_INVALID = 3,
  DTV_ERR_CONFIG = 4,
  DTV_ERR_FORMAT = 5,
  DTV_ERR_IO = 6,
  DTV_ERR_DIVERGENCE = 7,
  DTV_ERR_INTERNAL = 99
};

typedef struct dtv_config dtv_config;
typedef struct dtv_model dtv_model;
typedef struct dtv_report dtv_report;
typedef struct dtv_gradcheck dtv_gradcheck;
typedef struct dtv_dataset dtv_dataset;
typedef struct dtv_train dtv_train;
typedef struct dtv_attnmap dtv_attnmap;

DTV_API const char* dtv_last_error(void);
DTV_API const char* dtv_status_name(int status);
DTV_API void dtv_string_free(char* s);

/* Configs. Keys for dtv_config_set: local, mlp, ds, tokens, grid,
   resolution, classes, ffn_ratio. */
DTV_API int dtv_config_preset(const char* name, dtv_config** out);
DTV_API int dtv_config_from_json(const char* text, dtv_config** out);
DTV_API int dtv_config_load(const char* path, dtv_config** out);
DTV_API int dtv_config_set(dtv_config* cfg, const char* key, const char* value);
DTV_API int dtv_config_to_json(const dtv_config* cfg, char** out);
DTV_API int dtv_config_resolution(const dtv_config* cfg, int* out);
DTV_API int dtv_config_num_classes(const dtv_config* cfg, int* out);
DTV_API int dtv_config_name(const dtv_config* cfg, char** out);
DTV_API int dtv_config_validate_resolution(const dtv_config* cfg, int resolution);
DTV_API void dtv_config_free(dtv_config* cfg);

/* Models hold f32 parameters. Images are S x S x 3, row-major, channel-last. */
DTV_API int dtv_model_build(const dtv_config* cfg, uint64_t seed, dtv_model** out);
DTV_API int dtv_model_load(const char* path, const dtv_config* cfg, dtv_model** out);
DTV_API int dtv_model_save(const dtv_model* model, const char* path);
DTV_API int dtv_model_param_count(const dtv_model* model, uint64_t* out);
DTV_API int dtv_model_forward(const dtv_model* model, const float* image, size_t side, float* logits,
                              size_t num_logits);
DTV_API int dtv_model_instrumented_macs(const dtv_model* model, int resolution, uint64_t* out);
DTV_API void dtv_model_free(dtv_model* model);

/* Cost reports. */
DTV_API int dtv_report_params(const dtv_model* model, dtv_report** out);
DTV_API int dtv_report_flops(const dtv_config* cfg, int resolution, dtv_report** out);
DTV_API size_t dtv_report_size(const dtv_report* r);
DTV_API int dtv_report_entry(const dtv_report* r, size_t i, const char** path, uint64_t* params, uint64_t* macs);
DTV_API uint64_t dtv_report_total_params(const dtv_report* r);
DTV_API uint64_t dtv_report_total_macs(const dtv_report* r);
DTV_API int dtv_report_format(const dtv_report* r, char** out);
DTV_API void dtv_report_free(dtv_report* r);

/* Finite-difference suites in f64. scope: primitives, blocks or model.
   max_coords_per_leaf = 0 checks every coordinate. */
DTV_API int dtv_gradcheck_run(const char* scope, const dtv_config* model_cfg, uint64_t seed, double tol,
                              size_t max_coords_per_leaf, dtv_gradcheck** out);
DTV_API size_t dtv_gradcheck_size(const dtv_gradcheck* g);
DTV_API int dtv_gradcheck_entry(const dtv_gradcheck* g, size_t i, const char** name, double* max_rel_err,
                                size_t* coords, int* pass, const char** worst);
DTV_API void dtv_gradcheck_free(dtv_gradcheck* g);

/* Synthetic datasets. */
DTV_API int dtv_dataset_generate(uint64_t seed, size_t n, int classes, int side, dtv_dataset** out);
DTV_API int dtv_dataset_load(const char* path, dtv_dataset** out);
DTV_API int dtv_dataset_save(const dtv_dataset* d, const char* path);
DTV_API size_t dtv_dataset_size(const dtv_dataset* d);
DTV_API int dtv_dataset_side(const dtv_dataset* d);
DTV_API int dtv_dataset_classes(const dtv_dataset* d);
/* Copies image i (side*side*3 floats) into dst and its label into *label. */
DTV_API int dtv_dataset_image(const dtv_dataset* d, size_t i, float* dst, size_t dst_len, int* label);
DTV_API void dtv_dataset_free(dtv_dataset* d);

/* Training. optimizer: 0 = sgd, 1 = adamw. */
typedef struct dtv_train_options {
  int optimizer;
  double lr;
  double weight_decay;
  size_t micro_batch;
  uint64_t seed;
  size_t checkpoint_every;
  const char* checkpoint_path;
} dtv_train_options;

DTV_API void dtv_train_options_default(dtv_train_options* opts);
DTV_API int dtv_train_create(const dtv_config* cfg, uint64_t init_seed, dtv_train** out);
DTV_API int dtv_train_resume(const char* path, const dtv_config* cfg, dtv_train** out);
DTV_API int dtv_train_run(dtv_train* t, const dtv_dataset* d, const dtv_train_options* opts, size_t steps);
DTV_API int dtv_train_save(const dtv_train* t, const char* path);
DTV_API size_t dtv_train_step(const dtv_train* t);
DTV_API const double* dtv_train_losses(const dtv_train* t, size_t* n);
DTV_API int dtv_train_evaluate(const dtv_train* t, const dtv_dataset* d, double* accuracy);
/* The returned model is a copy owned by the caller. */
DTV_API int dtv_train_model(const dtv_train* t, dtv_model** out);
DTV_API void dtv_train_free(dtv_train* t);

/* Attention maps from the global broadcast. block < 0 is the last block.
   query: index >= 0, or DTV_QUERY_MEAN / DTV_QUERY_ALL. */
#define DTV_QUERY_MEAN (-1)
#define DTV_QUERY_ALL (-2)
DTV_API int dtv_attnmap_extract(const dtv_model* model, const float* image, size_t side, int block,
                                long query, dtv_attnmap** out);
DTV_API size_t dtv_attnmap_count(const dtv_attnmap* a);
DTV_API int dtv_attnmap_shape(const dtv_attnmap* a, size_t* rows, size_t* cols);
DTV_API int dtv_attnmap_block(const dtv_attnmap* a, size_t* block);
DTV_API const double* dtv_attnmap_data(const dtv_attnmap* a, size_t i);
/* format: "csv" or "pgm". */
DTV_API int dtv_attnmap_export(const dtv_attnmap* a, size_t i, const char* path, const char* format);
/* Fills up to k cells in descending order; returns the count in *n. */
DTV_API int dtv_attnmap_topk(const dtv_attnmap* a, size_t i, size_t k, size_t* rows, size_t* cols,
                             double* values, size_t* n);
DTV_API void dtv_attnmap_free(dtv_attnmap* a);

#ifdef __cplusplus
}
#endif

#endif  // DUALTOKEN_C_API_H_
