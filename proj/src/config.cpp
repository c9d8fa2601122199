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

#include "dualtoken/config.hpp"

#include <charconv>
#include <set>

#include "dualtoken/error.hpp"
#include "json.hpp"

namespace dtvit {
namespace {

using nlohmann::json;

template <class E>
struct EnumNames;

template <>
struct EnumNames<MlpKind> {
  static constexpr std::array<std::pair<MlpKind, std::string_view>, 2> kv{
      {{MlpKind::kNormal, "normal"}, {MlpKind::kMix, "mix"}}};
};
template <>
struct EnumNames<LocalKind> {
  static constexpr std::array<std::pair<LocalKind, std::string_view>, 2> kv{
      {{LocalKind::kConvEncoder, "conv_encoder"}, {LocalKind::kWindowMsa, "window_msa"}}};
};
template <>
struct EnumNames<DownsampleKind> {
  static constexpr std::array<std::pair<DownsampleKind, std::string_view>, 2> kv{
      {{DownsampleKind::kStepWise, "step_wise"}, {DownsampleKind::kOneStep, "one_step"}}};
};
template <>
struct EnumNames<GlobalMode> {
  static constexpr std::array<std::pair<GlobalMode, std::string_view>, 3> kv{
      {{GlobalMode::kPositionAwareSum, "position_aware_sum"},
       {GlobalMode::kNormalMsa, "normal_msa"},
       {GlobalMode::kPositionAwareMsa, "position_aware_msa"}}};
};

template <class E>
std::string_view enum_name(E v) {
  for (const auto& [e, n] : EnumNames<E>::kv)
    if (e == v) return n;
  return "?";
}

template <class E>
E enum_parse(std::string_view s, const char* field) {
  for (const auto& [e, n] : EnumNames<E>::kv)
    if (n == s) return e;
  fail(ErrorCode::kConfig, std::string("unknown value '") + std::string(s) + "' for " + field);
}

void require_keys(const json& j, std::initializer_list<std::string_view> keys, const char* where) {
  check(j.is_object(), ErrorCode::kConfig, std::string(where) + ": expected an object");
  std::set<std::string, std::less<>> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    check(allowed.contains(it.key()), ErrorCode::kConfig,
          std::string(where) + ": unknown field '" + it.key() + "'");
  for (auto k : keys)
    check(j.contains(std::string(k)), ErrorCode::kConfig,
          std::string(where) + ": missing field '" + std::string(k) + "'");
}

ModelConfig make_dualtoken(std::string name, std::array<int, 3> blocks, std::array<int, 3> channels,
                           MlpKind mlp) {
  ModelConfig c;
  c.name = std::move(name);
  const std::array<int, 3> heads{2, 4, 8};
  const std::array<int, 3> strides{8, 16, 32};
  const std::array<int, 3> kernels{5, 7, 7};
  const std::array<int, 3> steps{1, 0, 0};
  for (std::size_t s = 0; s < 3; ++s)
    c.stages[s] = {blocks[s], channels[s], heads[s], strides[s], kernels[s], steps[s], s == 2};
  c.mlp_kind = mlp;
  c.token_grid = 7;
  c.alpha = 0.1;
  c.ffn_ratio = 2;
  c.mlp_ratio = 2;
  c.neck_dim = 1280;
  c.num_classes = 1000;
  c.input_resolution = 224;
  return c;
}

ModelConfig make_toy(std::string name, MlpKind mlp) {
  ModelConfig c;
  c.name = std::move(name);
  c.stages[0] = {1, 8, 2, 8, 3, 0, false};
  c.stages[1] = {1, 16, 2, 16, 3, 0, true};
  c.stages[2] = {1, 32, 4, 32, 3, 0, true};
  c.token_grid = 2;
  c.normal_tokens = 4;
  c.mlp_kind = mlp;
  c.ffn_ratio = 2;
  c.mlp_ratio = 2;
  c.neck_dim = 0;
  c.num_classes = 8;
  c.input_resolution = 32;
  return c;
}

// Toy widths at full resolution with the 7x7 grid and the large-preset
// downsampling schedule; used for the ablation switches.
ModelConfig make_toy_224(std::string name) {
  ModelConfig c = make_toy(std::move(name), MlpKind::kNormal);
  c.stages[0].ds_steps = 1;
  c.stages[1].skip_downsample = false;
  c.token_grid = 7;
  c.normal_tokens = 8;
  c.input_resolution = 224;
  return c;
}

int parse_int(std::string_view s, const char* what) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  check(ec == std::errc() && p == s.data() + s.size(), ErrorCode::kConfig,
        std::string(what) + ": expected an integer, got '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::string_view to_string(MlpKind v) { return enum_name(v); }
std::string_view to_string(LocalKind v) { return enum_name(v); }
std::string_view to_string(DownsampleKind v) { return enum_name(v); }
std::string_view to_string(GlobalMode v) { return enum_name(v); }

BlockConfig block_config(const ModelConfig& cfg, std::size_t stage) {
  const StageConfig& s = cfg.stages.at(stage);
  BlockConfig b;
  b.channels = static_cast<std::size_t>(s.channels);
  b.heads = static_cast<std::size_t>(s.heads);
  b.dw_kernel = static_cast<std::size_t>(s.dw_kernel);
  b.ds_steps = static_cast<std::size_t>(s.ds_steps);
  b.skip_downsample = s.skip_downsample;
  b.alpha = cfg.alpha;
  b.token_grid = static_cast<std::size_t>(cfg.token_grid);
  b.normal_tokens = static_cast<std::size_t>(cfg.normal_tokens);
  b.mlp_kind = cfg.mlp_kind;
  b.local_kind = cfg.local_kind;
  b.ds_kind = cfg.ds_kind;
  b.global_mode = cfg.global_mode;
  b.ffn_ratio = static_cast<std::size_t>(cfg.ffn_ratio);
  b.mlp_ratio = static_cast<std::size_t>(cfg.mlp_ratio);
  b.window_size = static_cast<std::size_t>(cfg.window_size);
  b.bidim_enabled = cfg.bidim_enabled;
  return b;
}

std::vector<std::string> preset_names() {
  return {"dualtoken_t", "dualtoken_t_mix", "dualtoken_s", "dualtoken_s_mix", "toy", "toy_mix", "toy_224"};
}

ModelConfig preset(std::string_view name) {
  if (name == "dualtoken_t") return make_dualtoken("dualtoken_t", {2, 6, 4}, {48, 96, 192}, MlpKind::kNormal);
  if (name == "dualtoken_t_mix") return make_dualtoken("dualtoken_t_mix", {2, 6, 4}, {48, 96, 192}, MlpKind::kMix);
  if (name == "dualtoken_s") return make_dualtoken("dualtoken_s", {2, 6, 6}, {64, 128, 256}, MlpKind::kNormal);
  if (name == "dualtoken_s_mix") return make_dualtoken("dualtoken_s_mix", {2, 6, 6}, {64, 128, 256}, MlpKind::kMix);
  if (name == "toy") return make_toy("toy", MlpKind::kNormal);
  if (name == "toy_mix") return make_toy("toy_mix", MlpKind::kMix);
  if (name == "toy_224") return make_toy_224("toy_224");
  fail(ErrorCode::kConfig, "unknown preset '" + std::string(name) + "'");
}

void validate(const ModelConfig& cfg) {
  const std::array<int, 3> strides{8, 16, 32};
  for (std::size_t s = 0; s < 3; ++s) {
    const StageConfig& st = cfg.stages[s];
    const std::string where = "stage " + std::to_string(s + 1);
    check(st.blocks > 0 && st.channels > 0 && st.heads > 0, ErrorCode::kConfig,
          where + ": blocks, channels and heads must be positive");
    check(st.channels % st.heads == 0, ErrorCode::kConfig,
          where + ": channels " + std::to_string(st.channels) + " not divisible by heads " +
              std::to_string(st.heads));
    check(st.stride == strides[s], ErrorCode::kConfig,
          where + ": stride must be " + std::to_string(strides[s]));
    check(st.dw_kernel > 0 && st.dw_kernel % 2 == 1, ErrorCode::kConfig,
          where + ": depthwise kernel must be odd and positive");
    check(st.ds_steps >= 0, ErrorCode::kConfig, where + ": ds_steps must be >= 0");
  }
  check(cfg.token_grid >= 1, ErrorCode::kConfig, "token_grid must be >= 1");
  check(cfg.normal_tokens >= 1, ErrorCode::kConfig, "normal_tokens must be >= 1");
  check(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, ErrorCode::kConfig, "alpha must lie in [0, 1]");
  check(cfg.ffn_ratio >= 1 && cfg.mlp_ratio >= 1, ErrorCode::kConfig, "MLP ratios must be >= 1");
  check(cfg.window_size >= 1, ErrorCode::kConfig, "window_size must be >= 1");
  check(cfg.neck_dim >= 0, ErrorCode::kConfig, "neck_dim must be >= 0");
  check(cfg.num_classes >= 1, ErrorCode::kConfig, "num_classes must be >= 1");
  check(cfg.input_resolution > 0, ErrorCode::kConfig, "input_resolution must be positive");
}

void validate_resolution(const ModelConfig& cfg, int resolution) {
  check(resolution > 0 && resolution % 32 == 0, ErrorCode::kConfig,
        "resolution " + std::to_string(resolution) + " must be a positive multiple of 32");
  for (std::size_t s = 0; s < 3; ++s) {
    const int side = resolution / cfg.stages[s].stride;
    if (cfg.local_kind == LocalKind::kWindowMsa)
      check(side % cfg.window_size == 0, ErrorCode::kConfig,
            "stage " + std::to_string(s + 1) + ": side " + std::to_string(side) +
                " not divisible by window " + std::to_string(cfg.window_size));
    if (cfg.global_mode == GlobalMode::kNormalMsa || cfg.stages[s].skip_downsample) continue;
    if (cfg.ds_kind == DownsampleKind::kOneStep) continue;
    int cur = side;
    for (int m = 0; m <= cfg.stages[s].ds_steps; ++m) {
      check(cur % 2 == 0, ErrorCode::kConfig,
            "stage " + std::to_string(s + 1) + ": side " + std::to_string(side) +
                " is inconsistent with ds_steps " + std::to_string(cfg.stages[s].ds_steps));
      cur /= 2;
    }
  }
}

std::string config_to_json(const ModelConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  json stages = json::array();
  for (const auto& s : cfg.stages)
    stages.push_back({{"blocks", s.blocks},
                      {"channels", s.channels},
                      {"heads", s.heads},
                      {"stride", s.stride},
                      {"dw_kernel", s.dw_kernel},
                      {"ds_steps", s.ds_steps},
                      {"skip_downsample", s.skip_downsample}});
  j["stages"] = stages;
  j["token_grid"] = cfg.token_grid;
  j["normal_tokens"] = cfg.normal_tokens;
  j["alpha"] = cfg.alpha;
  j["mlp_kind"] = enum_name(cfg.mlp_kind);
  j["local_kind"] = enum_name(cfg.local_kind);
  j["ds_kind"] = enum_name(cfg.ds_kind);
  j["global_mode"] = enum_name(cfg.global_mode);
  j["ffn_ratio"] = cfg.ffn_ratio;
  j["mlp_ratio"] = cfg.mlp_ratio;
  j["window_size"] = cfg.window_size;
  j["bidim_enabled"] = cfg.bidim_enabled;
  j["neck_dim"] = cfg.neck_dim;
  j["num_classes"] = cfg.num_classes;
  j["input_resolution"] = cfg.input_resolution;
  return j.dump(2);
}

ModelConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  require_keys(j,
               {"name", "stages", "token_grid", "normal_tokens", "alpha", "mlp_kind", "local_kind",
                "ds_kind", "global_mode", "ffn_ratio", "mlp_ratio", "window_size", "bidim_enabled",
                "neck_dim", "num_classes", "input_resolution"},
               "config");
  ModelConfig c;
  try {
    c.name = j.at("name").get<std::string>();
    const json& stages = j.at("stages");
    check(stages.is_array() && stages.size() == 3, ErrorCode::kConfig, "config: exactly 3 stages required");
    for (std::size_t s = 0; s < 3; ++s) {
      const json& js = stages[s];
      require_keys(js, {"blocks", "channels", "heads", "stride", "dw_kernel", "ds_steps", "skip_downsample"},
                   "stage");
      c.stages[s] = {js.at("blocks").get<int>(),   js.at("channels").get<int>(),
                     js.at("heads").get<int>(),    js.at("stride").get<int>(),
                     js.at("dw_kernel").get<int>(), js.at("ds_steps").get<int>(),
                     js.at("skip_downsample").get<bool>()};
    }
    c.token_grid = j.at("token_grid").get<int>();
    c.normal_tokens = j.at("normal_tokens").get<int>();
    c.alpha = j.at("alpha").get<double>();
    c.mlp_kind = enum_parse<MlpKind>(j.at("mlp_kind").get<std::string>(), "mlp_kind");
    c.local_kind = enum_parse<LocalKind>(j.at("local_kind").get<std::string>(), "local_kind");
    c.ds_kind = enum_parse<DownsampleKind>(j.at("ds_kind").get<std::string>(), "ds_kind");
    c.global_mode = enum_parse<GlobalMode>(j.at("global_mode").get<std::string>(), "global_mode");
    c.ffn_ratio = j.at("ffn_ratio").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.window_size = j.at("window_size").get<int>();
    c.bidim_enabled = j.at("bidim_enabled").get<bool>();
    c.neck_dim = j.at("neck_dim").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.input_resolution = j.at("input_resolution").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

void apply_override(ModelConfig& cfg, std::string_view key, std::string_view value) {
  auto bad = [&] {
    fail(ErrorCode::kConfig,
         "invalid value '" + std::string(value) + "' for --" + std::string(key));
  };
  if (key == "local") {
    if (value == "conv") cfg.local_kind = LocalKind::kConvEncoder;
    else if (value == "window") cfg.local_kind = LocalKind::kWindowMsa;
    else bad();
  } else if (key == "mlp") {
    if (value == "normal") cfg.mlp_kind = MlpKind::kNormal;
    else if (value == "mix") cfg.mlp_kind = MlpKind::kMix;
    else bad();
  } else if (key == "ds") {
    if (value == "stepwise") cfg.ds_kind = DownsampleKind::kStepWise;
    else if (value == "onestep") cfg.ds_kind = DownsampleKind::kOneStep;
    else bad();
  } else if (key == "tokens") {
    if (value == "posaware") cfg.global_mode = GlobalMode::kPositionAwareSum;
    else if (value == "normal") cfg.global_mode = GlobalMode::kNormalMsa;
    else if (value == "posaware_msa") cfg.global_mode = GlobalMode::kPositionAwareMsa;
    else bad();
  } else if (key == "grid") {
    cfg.token_grid = parse_int(value, "--grid");
  } else if (key == "resolution") {
    cfg.input_resolution = parse_int(value, "--resolution");
  } else if (key == "classes") {
    cfg.num_classes = parse_int(value, "--classes");
  } else if (key == "ffn_ratio") {
    cfg.ffn_ratio = parse_int(value, "--ffn_ratio");
  } else {
    fail(ErrorCode::kConfig, "unknown override '" + std::string(key) + "'");
  }
  validate(cfg);
}

}  // namespace dtvit
