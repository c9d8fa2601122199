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

#include "dualtoken/c_api.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "dualtoken/analysis.hpp"
#include "dualtoken/suites.hpp"
#include "dualtoken/train.hpp"

struct dtv_config {
  dtvit::ModelConfig cfg;
};
struct dtv_model {
  dtvit::Model<float> model;
};
struct dtv_report {
  dtvit::CostReport report;
};
struct dtv_gradcheck {
  std::vector<dtvit::CheckResult> results;
};
struct dtv_dataset {
  dtvit::SyntheticDataset data;
};
struct dtv_train {
  dtvit::TrainState<float> state;
};
struct dtv_attnmap {
  dtvit::AttentionMapExport maps;
};

namespace {

using dtvit::ErrorCode;

thread_local std::string t_last_error;

template <class F>
int guard(F&& f) {
  try {
    f();
    t_last_error.clear();
    return DTV_OK;
  } catch (const dtvit::Error& e) {
    t_last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return DTV_ERR_INTERNAL;
  }
}

template <class P>
P* need(P* p, const char* what) {
  if (!p) dtvit::fail(ErrorCode::kInvalidArgument, std::string(what) + " is null");
  return p;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

dtvit::Tensor<float> image_tensor(const float* image, std::size_t side) {
  need(image, "image");
  const std::size_t n = side * side * 3;
  return dtvit::Tensor<float>({side, side, 3}, std::vector<float>(image, image + n));
}

}  // namespace

extern "C" {

const char* dtv_last_error(void) { return t_last_error.c_str(); }

const char* dtv_status_name(int status) {
  switch (status) {
    case DTV_OK: return "ok";
    case DTV_ERR_INTERNAL: return "internal";
    default:
      if (status >= 1 && status <= 7) return dtvit::error_code_name(static_cast<ErrorCode>(status));
      return "unknown";
  }
}

void dtv_string_free(char* s) { std::free(s); }

int dtv_config_preset(const char* name, dtv_config** out) {
  return guard([&] {
    *need(out, "out") = new dtv_config{dtvit::preset(need(name, "name"))};
  });
}

int dtv_config_from_json(const char* text, dtv_config** out) {
  return guard([&] {
    *need(out, "out") = new dtv_config{dtvit::config_from_json(need(text, "text"))};
  });
}

int dtv_config_load(const char* path, dtv_config** out) {
  return guard([&] {
    std::ifstream in(need(path, "path"));
    dtvit::check(static_cast<bool>(in), ErrorCode::kIo, std::string("cannot open ") + path);
    std::stringstream ss;
    ss << in.rdbuf();
    dtvit::ModelConfig cfg = dtvit::config_from_json(ss.str());
    dtvit::validate(cfg);
    *need(out, "out") = new dtv_config{std::move(cfg)};
  });
}

int dtv_config_set(dtv_config* cfg, const char* key, const char* value) {
  return guard([&] {
    // work on a copy so a rejected value leaves the config as it was
    dtvit::ModelConfig next = need(cfg, "cfg")->cfg;
    dtvit::apply_override(next, need(key, "key"), need(value, "value"));
    cfg->cfg = std::move(next);
  });
}

int dtv_config_to_json(const dtv_config* cfg, char** out) {
  return guard([&] { *need(out, "out") = dup_string(dtvit::config_to_json(need(cfg, "cfg")->cfg)); });
}

int dtv_config_resolution(const dtv_config* cfg, int* out) {
  return guard([&] { *need(out, "out") = need(cfg, "cfg")->cfg.input_resolution; });
}

int dtv_config_num_classes(const dtv_config* cfg, int* out) {
  return guard([&] { *need(out, "out") = need(cfg, "cfg")->cfg.num_classes; });
}

int dtv_config_name(const dtv_config* cfg, char** out) {
  return guard([&] { *need(out, "out") = dup_string(need(cfg, "cfg")->cfg.name); });
}

int dtv_config_validate_resolution(const dtv_config* cfg, int resolution) {
  return guard([&] { dtvit::validate_resolution(need(cfg, "cfg")->cfg, resolution); });
}

void dtv_config_free(dtv_config* cfg) { delete cfg; }

int dtv_model_build(const dtv_config* cfg, uint64_t seed, dtv_model** out) {
  return guard([&] {
    auto m = std::make_unique<dtv_model>(dtv_model{dtvit::build_model<float>(need(cfg, "cfg")->cfg, seed)});
    *need(out, "out") = m.release();
  });
}

int dtv_model_load(const char* path, const dtv_config* cfg, dtv_model** out) {
  return guard([&] {
    auto m = std::make_unique<dtv_model>(
        dtv_model{dtvit::load_checkpoint<float>(need(path, "path"), need(cfg, "cfg")->cfg)});
    *need(out, "out") = m.release();
  });
}

int dtv_model_save(const dtv_model* model, const char* path) {
  return guard([&] { dtvit::save_checkpoint(need(model, "model")->model, need(path, "path")); });
}

int dtv_model_param_count(const dtv_model* model, uint64_t* out) {
  return guard([&] { *need(out, "out") = need(model, "model")->model.param_count(); });
}

int dtv_model_forward(const dtv_model* model, const float* image, size_t side, float* logits, size_t num_logits) {
  return guard([&] {
    const auto& m = need(model, "model")->model;
    const auto out = dtvit::forward_batch(m, {image_tensor(image, side)}).at(0);
    dtvit::check(num_logits == out.size(), ErrorCode::kShapeMismatch,
                 "logits buffer holds " + std::to_string(num_logits) + " values, model emits " +
                     std::to_string(out.size()));
    std::memcpy(need(logits, "logits"), out.data().data(), out.size() * sizeof(float));
  });
}

int dtv_model_instrumented_macs(const dtv_model* model, int resolution, uint64_t* out) {
  return guard([&] { *need(out, "out") = dtvit::instrumented_macs(need(model, "model")->model, resolution); });
}

void dtv_model_free(dtv_model* model) { delete model; }

int dtv_report_params(const dtv_model* model, dtv_report** out) {
  return guard([&] { *need(out, "out") = new dtv_report{dtvit::count_params(need(model, "model")->model)}; });
}

int dtv_report_flops(const dtv_config* cfg, int resolution, dtv_report** out) {
  return guard([&] { *need(out, "out") = new dtv_report{dtvit::count_flops(need(cfg, "cfg")->cfg, resolution)}; });
}

size_t dtv_report_size(const dtv_report* r) { return r ? r->report.entries.size() : 0; }

int dtv_report_entry(const dtv_report* r, size_t i, const char** path, uint64_t* params, uint64_t* macs) {
  return guard([&] {
    const auto& e = need(r, "report")->report.entries;
    dtvit::check(i < e.size(), ErrorCode::kInvalidArgument, "report entry index out of range");
    if (path) *path = e[i].path.c_str();
    if (params) *params = e[i].params;
    if (macs) *macs = e[i].macs;
  });
}

uint64_t dtv_report_total_params(const dtv_report* r) { return r ? r->report.total_params() : 0; }
uint64_t dtv_report_total_macs(const dtv_report* r) { return r ? r->report.total_macs() : 0; }

int dtv_report_format(const dtv_report* r, char** out) {
  return guard([&] { *need(out, "out") = dup_string(dtvit::format_report(need(r, "report")->report)); });
}

void dtv_report_free(dtv_report* r) { delete r; }

int dtv_gradcheck_run(const char* scope, const dtv_config* model_cfg, uint64_t seed, double tol,
                      size_t max_coords_per_leaf, dtv_gradcheck** out) {
  return guard([&] {
    dtvit::GradCheckOptions opts;
    opts.tol = tol;
    opts.max_coords_per_leaf = max_coords_per_leaf;
    const auto s = dtvit::parse_grad_scope(need(scope, "scope"));
    dtvit::ModelConfig cfg = model_cfg ? model_cfg->cfg : dtvit::preset("toy");
    *need(out, "out") = new dtv_gradcheck{dtvit::run_gradcheck_suite(s, cfg, seed, opts)};
  });
}

size_t dtv_gradcheck_size(const dtv_gradcheck* g) { return g ? g->results.size() : 0; }

int dtv_gradcheck_entry(const dtv_gradcheck* g, size_t i, const char** name, double* max_rel_err,
                        size_t* coords, int* pass, const char** worst) {
  return guard([&] {
    const auto& r = need(g, "gradcheck")->results;
    dtvit::check(i < r.size(), ErrorCode::kInvalidArgument, "gradcheck entry index out of range");
    if (name) *name = r[i].name.c_str();
    if (max_rel_err) *max_rel_err = r[i].report.max_rel_err;
    if (coords) *coords = r[i].report.coords_checked;
    if (pass) *pass = r[i].report.pass ? 1 : 0;
    if (worst) *worst = r[i].report.worst.c_str();
  });
}

void dtv_gradcheck_free(dtv_gradcheck* g) { delete g; }

int dtv_dataset_generate(uint64_t seed, size_t n, int classes, int side, dtv_dataset** out) {
  return guard([&] { *need(out, "out") = new dtv_dataset{dtvit::gen_synthetic(seed, n, classes, side)}; });
}

int dtv_dataset_load(const char* path, dtv_dataset** out) {
  return guard([&] { *need(out, "out") = new dtv_dataset{dtvit::load_dataset(need(path, "path"))}; });
}

int dtv_dataset_save(const dtv_dataset* d, const char* path) {
  return guard([&] { dtvit::save_dataset(need(d, "dataset")->data, need(path, "path")); });
}

size_t dtv_dataset_size(const dtv_dataset* d) { return d ? d->data.size() : 0; }
int dtv_dataset_side(const dtv_dataset* d) { return d ? d->data.side : 0; }
int dtv_dataset_classes(const dtv_dataset* d) { return d ? d->data.classes : 0; }

int dtv_dataset_image(const dtv_dataset* d, size_t i, float* dst, size_t dst_len, int* label) {
  return guard([&] {
    const auto& data = need(d, "dataset")->data;
    const auto img = data.image<float>(i);
    dtvit::check(dst_len == img.size(), ErrorCode::kShapeMismatch,
                 "image buffer holds " + std::to_string(dst_len) + " values, image has " +
                     std::to_string(img.size()));
    std::memcpy(need(dst, "dst"), img.data().data(), img.size() * sizeof(float));
    if (label) *label = data.labels[i];
  });
}

void dtv_dataset_free(dtv_dataset* d) { delete d; }

void dtv_train_options_default(dtv_train_options* opts) {
  if (!opts) return;
  const dtvit::TrainOptions d;
  opts->optimizer = 1;
  opts->lr = d.lr;
  opts->weight_decay = d.weight_decay;
  opts->micro_batch = d.micro_batch;
  opts->seed = d.seed;
  opts->checkpoint_every = 0;
  opts->checkpoint_path = nullptr;
}

int dtv_train_create(const dtv_config* cfg, uint64_t init_seed, dtv_train** out) {
  return guard([&] {
    *need(out, "out") = new dtv_train{dtvit::init_train_state<float>(need(cfg, "cfg")->cfg, init_seed)};
  });
}

int dtv_train_resume(const char* path, const dtv_config* cfg, dtv_train** out) {
  return guard([&] {
    *need(out, "out") = new dtv_train{dtvit::load_train_state<float>(need(path, "path"), need(cfg, "cfg")->cfg)};
  });
}

int dtv_train_run(dtv_train* t, const dtv_dataset* d, const dtv_train_options* opts, size_t steps) {
  return guard([&] {
    need(opts, "opts");
    dtvit::check(opts->optimizer == 0 || opts->optimizer == 1, ErrorCode::kInvalidArgument,
                 "optimizer must be 0 (sgd) or 1 (adamw)");
    dtvit::TrainOptions o;
    o.optimizer = opts->optimizer == 0 ? dtvit::OptimizerKind::kSgd : dtvit::OptimizerKind::kAdamW;
    o.lr = opts->lr;
    o.weight_decay = opts->weight_decay;
    o.micro_batch = opts->micro_batch;
    o.seed = opts->seed;
    o.checkpoint_every = opts->checkpoint_every;
    o.checkpoint_path = opts->checkpoint_path ? opts->checkpoint_path : "";
    dtvit::train_steps(need(t, "train")->state, need(d, "dataset")->data, o, steps);
  });
}

int dtv_train_save(const dtv_train* t, const char* path) {
  return guard([&] { dtvit::save_train_state(need(t, "train")->state, need(path, "path")); });
}

size_t dtv_train_step(const dtv_train* t) { return t ? t->state.step : 0; }

const double* dtv_train_losses(const dtv_train* t, size_t* n) {
  if (n) *n = t ? t->state.loss_history.size() : 0;
  return t ? t->state.loss_history.data() : nullptr;
}

int dtv_train_evaluate(const dtv_train* t, const dtv_dataset* d, double* accuracy) {
  return guard([&] {
    *need(accuracy, "accuracy") = dtvit::evaluate(need(t, "train")->state.model, need(d, "dataset")->data);
  });
}

int dtv_train_model(const dtv_train* t, dtv_model** out) {
  return guard([&] {
    const auto& src = need(t, "train")->state.model;
    // Parameters are shared handles; rebuild and copy so the result is independent.
    auto m = std::make_unique<dtv_model>(dtv_model{dtvit::build_model<float>(src.cfg, src.seed)});
    std::vector<dtvit::StoredTensor> ts;
    for (const auto& p : src.params) ts.push_back(dtvit::to_stored(p.name, p.var.value()));
    dtvit::assign_parameters(m->model, ts);
    *need(out, "out") = m.release();
  });
}

void dtv_train_free(dtv_train* t) { delete t; }

int dtv_attnmap_extract(const dtv_model* model, const float* image, size_t side, int block, long query,
                        dtv_attnmap** out) {
  return guard([&] {
    dtvit::QuerySelect q;
    if (query >= 0) {
      q.kind = dtvit::QueryKind::kIndex;
      q.index = static_cast<std::size_t>(query);
    } else if (query == DTV_QUERY_MEAN) {
      q.kind = dtvit::QueryKind::kMean;
    } else if (query == DTV_QUERY_ALL) {
      q.kind = dtvit::QueryKind::kAll;
    } else {
      dtvit::fail(ErrorCode::kInvalidArgument, "invalid query selector " + std::to_string(query));
    }
    *need(out, "out") = new dtv_attnmap{
        dtvit::extract_attention_map(need(model, "model")->model, image_tensor(image, side), block, q)};
  });
}

size_t dtv_attnmap_count(const dtv_attnmap* a) { return a ? a->maps.maps.size() : 0; }

int dtv_attnmap_shape(const dtv_attnmap* a, size_t* rows, size_t* cols) {
  return guard([&] {
    *need(rows, "rows") = need(a, "attnmap")->maps.rows;
    *need(cols, "cols") = a->maps.cols;
  });
}

int dtv_attnmap_block(const dtv_attnmap* a, size_t* block) {
  return guard([&] { *need(block, "block") = need(a, "attnmap")->maps.block; });
}

const double* dtv_attnmap_data(const dtv_attnmap* a, size_t i) {
  if (!a || i >= a->maps.maps.size()) return nullptr;
  return a->maps.maps[i].data().data();
}

int dtv_attnmap_export(const dtv_attnmap* a, size_t i, const char* path, const char* format) {
  return guard([&] {
    const auto& maps = need(a, "attnmap")->maps.maps;
    dtvit::check(i < maps.size(), ErrorCode::kInvalidArgument, "map index out of range");
    const std::string f = need(format, "format");
    dtvit::check(f == "csv" || f == "pgm", ErrorCode::kInvalidArgument, "format must be csv or pgm");
    dtvit::export_heatmap(maps[i], need(path, "path"),
                          f == "csv" ? dtvit::HeatmapFormat::kCsv : dtvit::HeatmapFormat::kPgm);
  });
}

int dtv_attnmap_topk(const dtv_attnmap* a, size_t i, size_t k, size_t* rows, size_t* cols, double* values,
                     size_t* n) {
  return guard([&] {
    const auto& maps = need(a, "attnmap")->maps.maps;
    dtvit::check(i < maps.size(), ErrorCode::kInvalidArgument, "map index out of range");
    const auto cells = dtvit::top_k_cells(maps[i], k);
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (rows) rows[j] = cells[j].row;
      if (cols) cols[j] = cells[j].col;
      if (values) values[j] = cells[j].value;
    }
    *need(n, "n") = cells.size();
  });
}

void dtv_attnmap_free(dtv_attnmap* a) { delete a; }

}  // extern "C"
