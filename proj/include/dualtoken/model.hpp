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
#include <cstdint>
#include <string>
#include <vector>

#include "dualtoken/block.hpp"
#include "dualtoken/config.hpp"
#include "dualtoken/container.hpp"

namespace dtvit {

template <class T>
struct MergePatch {
  LayerNorm<T> norm;  // over the 4C concatenation
  Linear<T> proj;     // 4C -> C'

  MergePatch() = default;
  MergePatch(ParamBuilder<T>& pb, const std::string& name, std::size_t cin, std::size_t cout);
};

template <class T>
struct Model {
  ModelConfig cfg;
  std::uint64_t seed = 0;
  ParamList<T> params;  // enumeration order is the checkpoint order

  std::array<Conv2d<T>, 3> stem;
  std::array<LayerNorm<T>, 2> stem_norms;
  std::array<std::vector<BlockParams<T>>, 3> stages;
  std::array<MergePatch<T>, 2> merges;
  Var<T> global_init;                // rows x cols x C1
  std::array<Linear<T>, 2> g_proj;   // bias-free, per token
  LayerNorm<T> head_norm;
  Linear<T> neck;                    // present when cfg.neck_dim > 0
  LayerNorm<T> neck_norm;
  Linear<T> head;

  std::size_t g_rows = 0;
  std::size_t g_cols = 0;

  std::size_t param_count() const;
};

template <class T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed);

template <class T>
Var<T> stem_forward(const Model<T>& m, const Var<T>& image);

template <class T>
Var<T> merge_patch(const Var<T>& x, const MergePatch<T>& p);

template <class T>
GlobalTokens<T> project_global_tokens(const GlobalTokens<T>& g, const Linear<T>& proj);

template <class T>
GlobalTokens<T> initial_global_tokens(const Model<T>& m);

template <class T>
struct ForwardResult {
  Var<T> logits;  // num_classes
  std::vector<BlockActivations<T>> acts;
  GlobalTokens<T> g;  // after the last block
};

// image: S x S x 3
template <class T>
ForwardResult<T> forward(const Model<T>& m, const Var<T>& image);

template <class T>
std::vector<Tensor<T>> forward_batch(const Model<T>& m, const std::vector<Tensor<T>>& images);

template <class T>
void save_checkpoint(const Model<T>& m, const std::string& path);

// Loads parameters into a model freshly built from `cfg`.
template <class T>
Model<T> load_checkpoint(const std::string& path, const ModelConfig& cfg);

// Copies stored parameters into `m`; the first missing or mis-shaped tensor is
// reported by name.
template <class T>
void assign_parameters(Model<T>& m, const std::vector<StoredTensor>& tensors);

}  // namespace dtvit
