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

// dtvit: command-line front end over the dualtoken C API.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dualtoken/c_api.h"

namespace {

struct Failure : std::runtime_error {
  explicit Failure(const std::string& m) : std::runtime_error(m) {}
};

void ok(int status, const char* what) {
  if (status != DTV_OK)
    throw Failure(std::string(what) + ": " + dtv_status_name(status) + ": " + dtv_last_error());
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Config = Handle<dtv_config, dtv_config_free>;
using Model = Handle<dtv_model, dtv_model_free>;
using Report = Handle<dtv_report, dtv_report_free>;
using Gradcheck = Handle<dtv_gradcheck, dtv_gradcheck_free>;
using Dataset = Handle<dtv_dataset, dtv_dataset_free>;
using Train = Handle<dtv_train, dtv_train_free>;
using AttnMap = Handle<dtv_attnmap, dtv_attnmap_free>;

std::string take_string(char* s) {
  std::string out = s ? s : "";
  dtv_string_free(s);
  return out;
}

// Machine-parseable failure line; the caller turns any of these into exit 1.
bool report_check(const std::string& check, bool pass, const std::string& expected, const std::string& got,
                  const std::string& tol) {
  std::printf("%s %s expected=%s got=%s tol=%s\n", pass ? "PASS" : "FAIL", check.c_str(), expected.c_str(),
              got.c_str(), tol.c_str());
  return pass;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Common {
  std::string preset = "toy";
  std::string config;
  int resolution = 0;
  std::uint64_t seed = 42;
  std::string local, mlp, ds, tokens;
  int grid = 0;

  void add_to(CLI::App* app) {
    app->add_option("--preset", preset, "Preset name")->capture_default_str();
    app->add_option("--config", config, "JSON config file (overrides --preset)")->check(CLI::ExistingFile);
    app->add_option("--resolution", resolution, "Input side in pixels")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Seed for initialization and data")->capture_default_str();
    app->add_option("--local", local, "Local attention")->check(CLI::IsMember({"conv", "window"}));
    app->add_option("--mlp", mlp, "Global-token MLP")->check(CLI::IsMember({"normal", "mix"}));
    app->add_option("--ds", ds, "Downsampling")->check(CLI::IsMember({"stepwise", "onestep"}));
    app->add_option("--tokens", tokens, "Global-token mode")
        ->check(CLI::IsMember({"normal", "posaware", "posaware_msa"}));
    app->add_option("--grid", grid, "Global-token grid side")->check(CLI::Range(3, 8));
  }

  // Builds the resolved config and prints it as one line.
  void resolve(Config& cfg, bool print = true) const {
    if (!config.empty())
      ok(dtv_config_load(config.c_str(), cfg.out()), "load config");
    else
      ok(dtv_config_preset(preset.c_str(), cfg.out()), "preset");
    auto set = [&](const char* key, const std::string& v) {
      if (!v.empty()) ok(dtv_config_set(cfg.get(), key, v.c_str()), key);
    };
    set("local", local);
    set("mlp", mlp);
    set("ds", ds);
    set("tokens", tokens);
    if (grid > 0) set("grid", std::to_string(grid));
    if (resolution > 0) set("resolution", std::to_string(resolution));
    if (!print) return;
    char* js = nullptr;
    ok(dtv_config_to_json(cfg.get(), &js), "config json");
    std::string line;
    bool skip_ws = false;
    for (char c : take_string(js)) {
      if (c == '\n') {
        skip_ws = true;
        continue;
      }
      if (skip_ws && c == ' ') continue;
      skip_ws = false;
      line += c;
    }
    std::printf("config %s\n", line.c_str());
    std::printf("seed %llu\n", static_cast<unsigned long long>(seed));
  }

  bool overridden() const {
    return !config.empty() || resolution > 0 || !local.empty() || !mlp.empty() || !ds.empty() ||
           !tokens.empty() || grid > 0;
  }
};

int resolution_of(const Config& cfg) {
  int r = 0;
  ok(dtv_config_resolution(cfg.get(), &r), "resolution");
  return r;
}

// Image source: a dataset cache (--image with --index) or one synthetic sample.
std::vector<float> load_image(const std::string& path, std::size_t index, std::uint64_t seed, int side) {
  Dataset d;
  if (!path.empty()) {
    ok(dtv_dataset_load(path.c_str(), d.out()), "load image data");
  } else {
    ok(dtv_dataset_generate(seed, 1, 8, side, d.out()), "generate image");
    index = 0;
  }
  const int s = dtv_dataset_side(d.get());
  if (s != side) throw Failure("image side " + std::to_string(s) + " does not match resolution " + std::to_string(side));
  std::vector<float> img(static_cast<std::size_t>(s) * s * 3);
  ok(dtv_dataset_image(d.get(), index, img.data(), img.size(), nullptr), "image");
  return img;
}

struct Target {
  const char* preset;
  double params;
  double macs;
};
constexpr Target kTargets[] = {
    {"dualtoken_t_mix", 5.8e6, 0.5e9},
    {"dualtoken_s_mix", 11.4e6, 1.0e9},
    {"dualtoken_s", 11.9e6, 1.1e9},
};
constexpr double kParamTol = 0.10;
constexpr double kMacTol = 0.15;

bool cmd_count(const Common& c) {
  Config cfg;
  c.resolve(cfg);
  const int res = resolution_of(cfg);
  Model model;
  ok(dtv_model_build(cfg.get(), c.seed, model.out()), "build");
  Report params, flops;
  ok(dtv_report_params(model.get(), params.out()), "count params");
  ok(dtv_report_flops(cfg.get(), res, flops.out()), "count flops");
  std::printf("[params]\n%s", take_string([&] {
                char* s = nullptr;
                ok(dtv_report_format(params.get(), &s), "format");
                return s;
              }()).c_str());
  std::printf("[macs]\n%s", take_string([&] {
                char* s = nullptr;
                ok(dtv_report_format(flops.get(), &s), "format");
                return s;
              }()).c_str());
  const double p = static_cast<double>(dtv_report_total_params(params.get()));
  const double f = static_cast<double>(dtv_report_total_macs(flops.get()));
  std::printf("total_params %.0f\ntotal_macs %.0f\n", p, f);

  bool pass = true;
  std::uint64_t inst = 0;
  ok(dtv_model_instrumented_macs(model.get(), res, &inst), "instrumented forward");
  pass &= report_check("macs.instrumented", static_cast<double>(inst) == f, fmt("%.0f", f),
                       fmt("%.0f", static_cast<double>(inst)), "0");
  if (c.overridden() && !(c.resolution == 224 && c.config.empty() && c.local.empty() && c.mlp.empty() &&
                          c.ds.empty() && c.tokens.empty() && c.grid == 0))
    return pass;
  for (const Target& t : kTargets) {
    if (c.preset != t.preset || res != 224) continue;
    pass &= report_check("params." + c.preset, std::abs(p - t.params) <= kParamTol * t.params,
                         fmt("%.0f", t.params), fmt("%.0f", p), fmt("%g", kParamTol));
    pass &= report_check("macs." + c.preset, std::abs(f - t.macs) <= kMacTol * t.macs, fmt("%.0f", t.macs),
                         fmt("%.0f", f), fmt("%g", kMacTol));
  }
  return pass;
}

bool cmd_forward(const Common& c, const std::string& image, std::size_t index, const std::string& checkpoint) {
  Config cfg;
  c.resolve(cfg);
  const int res = resolution_of(cfg);
  Model model;
  if (checkpoint.empty())
    ok(dtv_model_build(cfg.get(), c.seed, model.out()), "build");
  else
    ok(dtv_model_load(checkpoint.c_str(), cfg.get(), model.out()), "load checkpoint");
  const std::vector<float> img = load_image(image, index, c.seed, res);
  int k = 0;
  ok(dtv_config_num_classes(cfg.get(), &k), "classes");
  std::vector<float> logits(static_cast<std::size_t>(k));
  ok(dtv_model_forward(model.get(), img.data(), static_cast<std::size_t>(res), logits.data(), logits.size()),
     "forward");
  double mn = logits[0], mx = logits[0], sum = 0;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    mn = std::min<double>(mn, logits[i]);
    if (logits[i] > logits[arg]) arg = i;
    mx = std::max<double>(mx, logits[i]);
    sum += logits[i];
  }
  std::printf("logits_stats n=%zu min=%.9g max=%.9g mean=%.9g argmax=%zu\n", logits.size(), mn, mx,
              sum / static_cast<double>(logits.size()), arg);
  std::printf("logits");
  for (float v : logits) std::printf(" %.9g", v);
  std::printf("\n");
  return true;
}

bool cmd_gradcheck(const Common& c, const std::string& scope, double tol, std::size_t coords) {
  Config cfg;
  c.resolve(cfg);
  Gradcheck g;
  ok(dtv_gradcheck_run(scope.c_str(), cfg.get(), c.seed, tol, coords, g.out()), "gradcheck");
  bool pass = true;
  for (std::size_t i = 0; i < dtv_gradcheck_size(g.get()); ++i) {
    const char* name = nullptr;
    const char* worst = nullptr;
    double err = 0;
    std::size_t n = 0;
    int p = 0;
    ok(dtv_gradcheck_entry(g.get(), i, &name, &err, &n, &p, &worst), "gradcheck entry");
    pass &= report_check(std::string("gradcheck.") + name, p != 0, "0", fmt("%.3e", err), fmt("%g", tol));
    std::fprintf(stderr, "%s coords=%zu worst=%s\n", name, n, worst);
  }
  return pass;
}

struct TrainArgs {
  std::size_t steps = 200;
  double lr = 1e-3;
  std::string optimizer = "adamw";
  std::string data;
  std::string out;
  std::string resume;
  std::size_t n = 800;
  std::size_t checkpoint_every = 0;
  std::size_t log_every = 10;
};

bool cmd_train(const Common& c, const TrainArgs& a) {
  Config cfg;
  c.resolve(cfg);
  const int res = resolution_of(cfg);
  int classes = 0;
  ok(dtv_config_num_classes(cfg.get(), &classes), "classes");
  Dataset data;
  if (!a.data.empty())
    ok(dtv_dataset_load(a.data.c_str(), data.out()), "load data");
  else
    ok(dtv_dataset_generate(c.seed, a.n, classes, res, data.out()), "generate data");

  Train t;
  if (!a.resume.empty())
    ok(dtv_train_resume(a.resume.c_str(), cfg.get(), t.out()), "resume");
  else
    ok(dtv_train_create(cfg.get(), c.seed, t.out()), "init");

  std::string ckpt;
  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    ckpt = (std::filesystem::path(a.out) / "train_state.dtvt").string();
  }
  dtv_train_options o;
  dtv_train_options_default(&o);
  o.optimizer = a.optimizer == "sgd" ? 0 : 1;
  o.lr = a.lr;
  o.seed = c.seed;
  o.checkpoint_every = ckpt.empty() ? 0 : a.checkpoint_every;
  o.checkpoint_path = ckpt.empty() ? nullptr : ckpt.c_str();

  std::size_t done = 0;
  const std::size_t chunk = a.log_every > 0 ? a.log_every : a.steps;
  while (done < a.steps) {
    const std::size_t n = std::min(chunk, a.steps - done);
    const int st = dtv_train_run(t.get(), data.get(), &o, n);
    if (st == DTV_ERR_DIVERGENCE) {
      std::fprintf(stderr, "%s\n", dtv_last_error());
      report_check("train.divergence", false, "finite", "nan", "0");
      return false;
    }
    ok(st, "train");
    done += n;
    std::size_t len = 0;
    const double* losses = dtv_train_losses(t.get(), &len);
    std::printf("step %zu loss %.9g\n", dtv_train_step(t.get()), losses[len - 1]);
  }
  double acc = 0;
  ok(dtv_train_evaluate(t.get(), data.get(), &acc), "evaluate");
  std::printf("train_accuracy %.6f\n", acc);
  if (!ckpt.empty()) {
    ok(dtv_train_save(t.get(), ckpt.c_str()), "save");
    std::size_t len = 0;
    const double* losses = dtv_train_losses(t.get(), &len);
    std::ofstream csv(std::filesystem::path(a.out) / "losses.csv");
    csv << "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, losses[i]);
      csv << buf;
    }
    std::printf("wrote %s\n", ckpt.c_str());
  }
  return true;
}

bool cmd_attnmap(const Common& c, const std::string& query, const std::string& out, const std::string& format,
                 int block, const std::string& image, std::size_t index, const std::string& checkpoint) {
  Config cfg;
  c.resolve(cfg);
  const int res = resolution_of(cfg);
  Model model;
  if (checkpoint.empty())
    ok(dtv_model_build(cfg.get(), c.seed, model.out()), "build");
  else
    ok(dtv_model_load(checkpoint.c_str(), cfg.get(), model.out()), "load checkpoint");
  long q = DTV_QUERY_MEAN;
  if (query == "all") {
    q = DTV_QUERY_ALL;
  } else if (query != "mean") {
    std::size_t used = 0;
    try {
      q = std::stol(query, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != query.size() || q < 0) throw Failure("--query must be a token index, mean or all");
  }
  const std::vector<float> img = load_image(image, index, c.seed, res);
  AttnMap maps;
  ok(dtv_attnmap_extract(model.get(), img.data(), static_cast<std::size_t>(res), block, q, maps.out()),
     "extract");
  std::size_t rows = 0, cols = 0, blk = 0;
  ok(dtv_attnmap_shape(maps.get(), &rows, &cols), "shape");
  ok(dtv_attnmap_block(maps.get(), &blk), "block");
  std::filesystem::create_directories(out);
  bool pass = true;
  for (std::size_t i = 0; i < dtv_attnmap_count(maps.get()); ++i) {
    const std::string tag = q == DTV_QUERY_MEAN ? "mean" : "q" + std::to_string(q == DTV_QUERY_ALL ? static_cast<long>(i) : q);
    const std::string path =
        (std::filesystem::path(out) / ("attn_block" + std::to_string(blk) + "_" + tag + "." + format)).string();
    ok(dtv_attnmap_export(maps.get(), i, path.c_str(), format.c_str()), "export");
    const double* d = dtv_attnmap_data(maps.get(), i);
    double sum = 0;
    for (std::size_t j = 0; j < rows * cols; ++j) sum += d[j];
    pass &= report_check("attnmap.sum." + tag, std::abs(sum - 1.0) <= 1e-6, "1", fmt("%.12g", sum), "1e-06");
    std::vector<std::size_t> r(8), cc(8);
    std::vector<double> v(8);
    std::size_t n = 0;
    ok(dtv_attnmap_topk(maps.get(), i, 8, r.data(), cc.data(), v.data(), &n), "topk");
    std::printf("map %s %zux%zu top8", path.c_str(), rows, cols);
    for (std::size_t j = 0; j < n; ++j) std::printf(" (%zu,%zu,%.6g)", r[j], cc[j], v[j]);
    std::printf("\n");
  }
  return pass;
}

bool cmd_gen_data(const Common& c, const std::string& out, std::size_t n, int classes) {
  Config cfg;
  c.resolve(cfg);
  const int res = resolution_of(cfg);
  Dataset d;
  ok(dtv_dataset_generate(c.seed, n, classes, res, d.out()), "generate");
  ok(dtv_dataset_save(d.get(), out.c_str()), "save");
  std::vector<std::size_t> hist(static_cast<std::size_t>(classes));
  std::vector<float> img(static_cast<std::size_t>(res) * res * 3);
  for (std::size_t i = 0; i < n; ++i) {
    int label = 0;
    ok(dtv_dataset_image(d.get(), i, img.data(), img.size(), &label), "image");
    ++hist[static_cast<std::size_t>(label)];
  }
  std::printf("wrote %s n=%zu classes=%d side=%d\nlabel_histogram", out.c_str(), n, classes, res);
  for (std::size_t h : hist) std::printf(" %zu", h);
  std::printf("\n");
  return true;
}

bool cmd_dump_config(const Common& c) {
  Config cfg;
  c.resolve(cfg, false);
  char* js = nullptr;
  ok(dtv_config_to_json(cfg.get(), &js), "config json");
  std::printf("%s\n", take_string(js).c_str());
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DualToken-ViT reference tools"};
  app.require_subcommand(1);

  Common count_c, fwd_c, gc_c, train_c, attn_c, gen_c, dump_c;
  auto* count = app.add_subcommand("count", "Parameter and MAC report");
  count_c.add_to(count);
  count_c.preset = "dualtoken_s";

  std::string image, checkpoint;
  std::size_t index = 0;
  auto* fwd = app.add_subcommand("forward", "Run one image through the model");
  fwd_c.add_to(fwd);
  fwd->add_option("--image", image, "Dataset cache holding the image")->check(CLI::ExistingFile);
  fwd->add_option("--index", index, "Image index within --image");
  fwd->add_option("--checkpoint", checkpoint, "Model checkpoint")->check(CLI::ExistingFile);

  std::string scope = "primitives";
  double tol = 1e-4;
  std::size_t coords = 0;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  gc_c.add_to(gc);
  gc->add_option("--scope", scope, "Suite")->check(CLI::IsMember({"primitives", "blocks", "model"}))
      ->capture_default_str();
  gc->add_option("--tol", tol, "Max relative error")->capture_default_str();
  gc->add_option("--coords", coords, "Sampled coordinates per leaf (0 = all)")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train on synthetic data");
  train_c.add_to(train);
  train->add_option("--steps", ta.steps, "Optimizer steps")->capture_default_str();
  train->add_option("--lr", ta.lr, "Learning rate")->capture_default_str();
  train->add_option("--optimizer", ta.optimizer, "Optimizer")->check(CLI::IsMember({"adamw", "sgd"}))
      ->capture_default_str();
  train->add_option("--data", ta.data, "Dataset cache (default: generate)")->check(CLI::ExistingFile);
  train->add_option("--samples", ta.n, "Generated dataset size")->capture_default_str();
  train->add_option("--out", ta.out, "Output directory for state and losses");
  train->add_option("--resume", ta.resume, "Training state to continue from")->check(CLI::ExistingFile);
  train->add_option("--checkpoint-every", ta.checkpoint_every, "Save state every N steps (needs --out)");
  train->add_option("--log-every", ta.log_every, "Print loss every N steps")->capture_default_str();

  std::string query = "mean", out_dir = "attnmaps", format = "csv";
  int block = -1;
  auto* attn = app.add_subcommand("attnmap", "Export global-broadcast attention maps");
  attn_c.add_to(attn);
  attn->add_option("--query", query, "Token index, mean or all")->capture_default_str();
  attn->add_option("--out", out_dir, "Output directory")->capture_default_str();
  attn->add_option("--format", format, "File format")->check(CLI::IsMember({"csv", "pgm"}))->capture_default_str();
  attn->add_option("--block", block, "Block index, -1 for the last")->capture_default_str();
  attn->add_option("--image", image, "Dataset cache holding the image")->check(CLI::ExistingFile);
  attn->add_option("--index", index, "Image index within --image");
  attn->add_option("--checkpoint", checkpoint, "Model checkpoint")->check(CLI::ExistingFile);

  std::string data_out = "synthetic.dtvt";
  std::size_t n = 800;
  int classes = 8;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset cache");
  gen_c.add_to(gen);
  gen->add_option("--out", data_out, "Output file")->capture_default_str();
  gen->add_option("--samples", n, "Number of samples")->capture_default_str();
  gen->add_option("--classes", classes, "Number of classes")->capture_default_str();

  auto* dump = app.add_subcommand("dump-config", "Print a config as JSON");
  dump_c.add_to(dump);

  CLI11_PARSE(app, argc, argv);

  try {
    bool pass = true;
    if (*count) pass = cmd_count(count_c);
    else if (*fwd) pass = cmd_forward(fwd_c, image, index, checkpoint);
    else if (*gc) pass = cmd_gradcheck(gc_c, scope, tol, coords);
    else if (*train) pass = cmd_train(train_c, ta);
    else if (*attn) pass = cmd_attnmap(attn_c, query, out_dir, format, block, image, index, checkpoint);
    else if (*gen) pass = cmd_gen_data(gen_c, data_out, n, classes);
    else if (*dump) pass = cmd_dump_config(dump_c);
    std::fflush(stdout);
    return pass ? 0 : 1;
  } catch (const Failure& e) {
    std::fflush(stdout);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fflush(stdout);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
