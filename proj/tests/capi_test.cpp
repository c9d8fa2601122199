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

// Exercises the shared library strictly through its C interface.

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dualtoken/c_api.h"

namespace {

std::string temp_path(const std::string& name) { return ::testing::TempDir() + "dtvit_capi_" + name; }

TEST(CApi, ConfigAndModelLifecycle) {
  dtv_config* cfg = nullptr;
  ASSERT_EQ(dtv_config_preset("dualtoken_t_mix", &cfg), DTV_OK);
  dtv_model* m = nullptr;
  ASSERT_EQ(dtv_model_build(cfg, 1, &m), DTV_OK);
  uint64_t n = 0;
  ASSERT_EQ(dtv_model_param_count(m, &n), DTV_OK);
  EXPECT_NEAR(double(n), 5.8e6, 0.58e6);
  dtv_model_free(m);
  dtv_config_free(cfg);
}

TEST(CApi, ErrorsCarryCodeAndMessage) {
  dtv_config* cfg = nullptr;
  EXPECT_EQ(dtv_config_preset("nope", &cfg), DTV_ERR_CONFIG);
  EXPECT_EQ(cfg, nullptr);
  EXPECT_NE(std::strstr(dtv_last_error(), "nope"), nullptr);
  EXPECT_STREQ(dtv_status_name(DTV_ERR_SHAPE), "shape_mismatch");
  ASSERT_EQ(dtv_config_preset("toy", &cfg), DTV_OK);
  EXPECT_EQ(dtv_config_set(cfg, "grid", "0"), DTV_ERR_CONFIG);
  EXPECT_EQ(dtv_config_validate_resolution(cfg, 30), DTV_ERR_CONFIG);
  EXPECT_EQ(dtv_config_validate_resolution(cfg, 64), DTV_OK);
  dtv_model* m = nullptr;
  ASSERT_EQ(dtv_model_build(cfg, 1, &m), DTV_OK);
  std::vector<float> img(40 * 40 * 3, 0.1f), logits(8);
  EXPECT_NE(dtv_model_forward(m, img.data(), 40, logits.data(), logits.size()), DTV_OK);
  EXPECT_EQ(dtv_model_load(temp_path("missing.dtvt").c_str(), cfg, &m), DTV_ERR_IO);
  dtv_model_free(m);
  dtv_config_free(cfg);
}

TEST(CApi, JsonRoundTrip) {
  dtv_config* cfg = nullptr;
  ASSERT_EQ(dtv_config_preset("toy_224", &cfg), DTV_OK);
  ASSERT_EQ(dtv_config_set(cfg, "local", "window"), DTV_OK);
  char* json = nullptr;
  ASSERT_EQ(dtv_config_to_json(cfg, &json), DTV_OK);
  dtv_config* back = nullptr;
  ASSERT_EQ(dtv_config_from_json(json, &back), DTV_OK);
  char* json2 = nullptr;
  ASSERT_EQ(dtv_config_to_json(back, &json2), DTV_OK);
  EXPECT_STREQ(json, json2);
  int res = 0;
  ASSERT_EQ(dtv_config_resolution(back, &res), DTV_OK);
  EXPECT_EQ(res, 224);
  dtv_string_free(json);
  dtv_string_free(json2);
  dtv_config_free(cfg);
  dtv_config_free(back);
}

TEST(CApi, FlopsReportMatchesInstrumented) {
  dtv_config* cfg = nullptr;
  ASSERT_EQ(dtv_config_preset("toy", &cfg), DTV_OK);
  dtv_report* r = nullptr;
  ASSERT_EQ(dtv_report_flops(cfg, 32, &r), DTV_OK);
  dtv_model* m = nullptr;
  ASSERT_EQ(dtv_model_build(cfg, 2, &m), DTV_OK);
  uint64_t macs = 0;
  ASSERT_EQ(dtv_model_instrumented_macs(m, 32, &macs), DTV_OK);
  EXPECT_EQ(dtv_report_total_macs(r), macs);
  uint64_t sum = 0;
  for (size_t i = 0; i < dtv_report_size(r); ++i) {
    const char* path = nullptr;
    uint64_t p = 0, k = 0;
    ASSERT_EQ(dtv_report_entry(r, i, &path, &p, &k), DTV_OK);
    sum += k;
  }
  EXPECT_EQ(sum, macs);
  dtv_report_free(r);
  dtv_model_free(m);
  dtv_config_free(cfg);
}

TEST(CApi, SaveLoadForwardIdentical) {
  dtv_config* cfg = nullptr;
  ASSERT_EQ(dtv_config_preset("toy", &cfg), DTV_OK);
  dtv_model* m = nullptr;
  ASSERT_EQ(dtv_model_build(cfg, 3, &m), DTV_OK);
  const auto path = temp_path("model.dtvt");
  ASSERT_EQ(dtv_model_save(m, path.c_str()), DTV_OK);
  dtv_model* back = nullptr;
  ASSERT_EQ(dtv_model_load(path.c_str(), cfg, &back), DTV_OK);
  std::vector<float> img(32 * 32 * 3);
  for (size_t i = 0; i < img.size(); ++i) img[i] = std::sin(0.37f * float(i));
  std::vector<float> a(8), b(8);
  ASSERT_EQ(dtv_model_forward(m, img.data(), 32, a.data(), 8), DTV_OK);
  ASSERT_EQ(dtv_model_forward(back, img.data(), 32, b.data(), 8), DTV_OK);
  EXPECT_EQ(a, b);
  std::filesystem::remove(path);
  dtv_model_free(m);
  dtv_model_free(back);
  dtv_config_free(cfg);
}

TEST(CApi, TrainResumeAndEvaluate) {
  dtv_config* cfg = nullptr;
  ASSERT_EQ(dtv_config_preset("toy", &cfg), DTV_OK);
  dtv_dataset* d = nullptr;
  ASSERT_EQ(dtv_dataset_generate(5, 32, 8, 32, &d), DTV_OK);
  EXPECT_EQ(dtv_dataset_size(d), 32u);
  dtv_train_options opts;
  dtv_train_options_default(&opts);
  dtv_train* full = nullptr;
  ASSERT_EQ(dtv_train_create(cfg, 6, &full), DTV_OK);
  ASSERT_EQ(dtv_train_run(full, d, &opts, 6), DTV_OK);
  dtv_train* half = nullptr;
  ASSERT_EQ(dtv_train_create(cfg, 6, &half), DTV_OK);
  ASSERT_EQ(dtv_train_run(half, d, &opts, 3), DTV_OK);
  const auto path = temp_path("state.dtvt");
  ASSERT_EQ(dtv_train_save(half, path.c_str()), DTV_OK);
  dtv_train* resumed = nullptr;
  ASSERT_EQ(dtv_train_resume(path.c_str(), cfg, &resumed), DTV_OK);
  ASSERT_EQ(dtv_train_run(resumed, d, &opts, 3), DTV_OK);
  size_t na = 0, nb = 0;
  const double* la = dtv_train_losses(full, &na);
  const double* lb = dtv_train_losses(resumed, &nb);
  ASSERT_EQ(na, 6u);
  ASSERT_EQ(nb, 6u);
  for (size_t i = 0; i < 6; ++i) EXPECT_EQ(la[i], lb[i]);
  double acc = -1;
  ASSERT_EQ(dtv_train_evaluate(resumed, d, &acc), DTV_OK);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
  std::filesystem::remove(path);
  dtv_train_free(full);
  dtv_train_free(half);
  dtv_train_free(resumed);
  dtv_dataset_free(d);
  dtv_config_free(cfg);
}

TEST(CApi, AttentionMaps) {
  dtv_config* cfg = nullptr;
  ASSERT_EQ(dtv_config_preset("toy_224", &cfg), DTV_OK);
  dtv_model* m = nullptr;
  ASSERT_EQ(dtv_model_build(cfg, 7, &m), DTV_OK);
  std::vector<float> img(224 * 224 * 3);
  for (size_t i = 0; i < img.size(); ++i) img[i] = std::cos(0.011f * float(i));
  dtv_attnmap* a = nullptr;
  ASSERT_EQ(dtv_attnmap_extract(m, img.data(), 224, -1, DTV_QUERY_ALL, &a), DTV_OK);
  EXPECT_EQ(dtv_attnmap_count(a), 49u);
  size_t rows = 0, cols = 0;
  ASSERT_EQ(dtv_attnmap_shape(a, &rows, &cols), DTV_OK);
  EXPECT_EQ(rows * cols, 49u);
  double s = 0;
  const double* map = dtv_attnmap_data(a, 0);
  for (size_t i = 0; i < 49; ++i) s += map[i];
  EXPECT_NEAR(s, 1.0, 1e-6);
  size_t r[8], c[8], n = 0;
  double v[8];
  ASSERT_EQ(dtv_attnmap_topk(a, 0, 8, r, c, v, &n), DTV_OK);
  EXPECT_EQ(n, 8u);
  for (size_t i = 1; i < n; ++i) EXPECT_GE(v[i - 1], v[i]);
  EXPECT_EQ(dtv_attnmap_export(a, 0, temp_path("m.csv").c_str(), "tiff"), DTV_ERR_INVALID);
  dtv_attnmap_free(a);
  EXPECT_NE(dtv_attnmap_extract(m, img.data(), 224, -1, 5000, &a), DTV_OK);
  dtv_model_free(m);
  dtv_config_free(cfg);
}

}  // namespace
