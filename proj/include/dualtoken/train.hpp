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

#include <cstdint>
#include <string>
#include <vector>

#include "dualtoken/data.hpp"
#include "dualtoken/model.hpp"

namespace dtvit {

enum class OptimizerKind { kSgd, kAdamW };

struct TrainOptions {
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 4e-2;
  std::size_t micro_batch = 8;
  std::uint64_t seed = 42;         // drives per-step sample selection
  std::size_t checkpoint_every = 0;
  std::string checkpoint_path;
};

template <class T>
struct TrainState {
  Model<T> model;
  std::vector<Tensor<T>> m;  // first moments, one per parameter
  std::vector<Tensor<T>> v;  // second moments
  std::size_t step = 0;
  std::vector<double> loss_history;  // mean micro-batch loss per step
};

template <class T>
TrainState<T> init_train_state(const ModelConfig& cfg, std::uint64_t seed);

// Sample indices used at `step`; a fresh permutation of the data per epoch.
std::vector<std::size_t> step_indices(std::uint64_t seed, std::size_t step, std::size_t batch, std::size_t n);

// Runs `steps` more optimizer steps on `state`. A non-finite loss or
// activation raises kDivergence naming the step.
template <class T>
void train_steps(TrainState<T>& state, const SyntheticDataset& data, const TrainOptions& opts,
                 std::size_t steps);

template <class T>
TrainState<T> train_toy(const ModelConfig& cfg, const SyntheticDataset& data, std::size_t steps,
                        const TrainOptions& opts, std::uint64_t init_seed);

template <class T>
void save_train_state(const TrainState<T>& s, const std::string& path);
template <class T>
TrainState<T> load_train_state(const std::string& path, const ModelConfig& cfg);

// Argmax accuracy; ties go to the lowest class index.
template <class T>
double evaluate(const Model<T>& m, const SyntheticDataset& data);

template <class T>
std::size_t argmax(const Tensor<T>& logits);

}  // namespace dtvit
