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

#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace dtvit {

enum class MlpKind { kNormal, kMix };
enum class LocalKind { kConvEncoder, kWindowMsa };
enum class DownsampleKind { kStepWise, kOneStep };
enum class GlobalMode { kPositionAwareSum, kNormalMsa, kPositionAwareMsa };

std::string_view to_string(MlpKind v);
std::string_view to_string(LocalKind v);
std::string_view to_string(DownsampleKind v);
std::string_view to_string(GlobalMode v);

struct StageConfig {
  int blocks = 1;
  int channels = 8;
  int heads = 1;
  int stride = 8;       // input side / feature-map side
  int dw_kernel = 5;    // Conv Encoder depthwise kernel
  int ds_steps = 0;     // M: conv+pool repetitions after the first pool
  bool skip_downsample = false;

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

struct ModelConfig {
  std::string name = "custom";
  std::array<StageConfig, 3> stages{};
  int token_grid = 7;      // side g of the position-aware token grid
  int normal_tokens = 8;   // token count of the 1-D (normal) global-token modes
  double alpha = 0.1;
  MlpKind mlp_kind = MlpKind::kNormal;
  LocalKind local_kind = LocalKind::kConvEncoder;
  DownsampleKind ds_kind = DownsampleKind::kStepWise;
  GlobalMode global_mode = GlobalMode::kPositionAwareSum;
  int ffn_ratio = 4;
  int mlp_ratio = 2;       // hidden width multiplier of the normal token MLP
  int window_size = 7;
  bool bidim_enabled = true;
  int neck_dim = 0;        // 0: head is a single linear layer
  int num_classes = 1000;
  int input_resolution = 224;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Per-block view of the model configuration.
struct BlockConfig {
  std::size_t channels = 8;
  std::size_t heads = 1;
  std::size_t dw_kernel = 5;
  std::size_t ds_steps = 0;
  bool skip_downsample = false;
  double alpha = 0.1;
  std::size_t token_grid = 7;
  std::size_t normal_tokens = 8;
  MlpKind mlp_kind = MlpKind::kNormal;
  LocalKind local_kind = LocalKind::kConvEncoder;
  DownsampleKind ds_kind = DownsampleKind::kStepWise;
  GlobalMode global_mode = GlobalMode::kPositionAwareSum;
  std::size_t ffn_ratio = 4;
  std::size_t mlp_ratio = 2;
  std::size_t window_size = 7;
  bool bidim_enabled = true;

  // Global tokens form a 2-D grid (g x g) rather than a 1-D list.
  bool grid_tokens() const { return global_mode != GlobalMode::kNormalMsa; }
  std::size_t global_token_count() const {
    return grid_tokens() ? token_grid * token_grid : normal_tokens;
  }
};

BlockConfig block_config(const ModelConfig& cfg, std::size_t stage);

std::vector<std::string> preset_names();
// Throws dtvit::Error(kConfig) for unknown names.
ModelConfig preset(std::string_view name);

// Structural validation; throws dtvit::Error(kConfig).
void validate(const ModelConfig& cfg);
// Resolution checks against stage arithmetic; throws dtvit::Error(kConfig).
void validate_resolution(const ModelConfig& cfg, int resolution);

std::string config_to_json(const ModelConfig& cfg);
// Unknown or missing fields are rejected.
ModelConfig config_from_json(std::string_view text);

// Applies a single named override ("local", "mlp", "ds", "tokens", "grid",
// "resolution", "alpha", "classes", "ffn_ratio") with CLI-style values.
void apply_override(ModelConfig& cfg, std::string_view key, std::string_view value);

}  // namespace dtvit
