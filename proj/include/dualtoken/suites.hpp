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
#include <random>
#include <string>
#include <vector>

#include "dualtoken/config.hpp"
#include "dualtoken/gradcheck.hpp"
#include "dualtoken/layers.hpp"

namespace dtvit {

enum class GradScope { kPrimitives, kBlocks, kModel };

GradScope parse_grad_scope(const std::string& s);

struct CheckResult {
  std::string name;
  GradCheckReport report;
};

// Finite-difference suites in f64. kModel checks `model_cfg` at its input
// resolution; the other scopes use fixed small shapes.
std::vector<CheckResult> run_gradcheck_suite(GradScope scope, const ModelConfig& model_cfg, std::uint64_t seed,
                                             const GradCheckOptions& opts);

std::vector<CheckResult> gradcheck_primitives(std::uint64_t seed, const GradCheckOptions& opts);
std::vector<CheckResult> gradcheck_blocks(std::uint64_t seed, const GradCheckOptions& opts);
CheckResult gradcheck_model(const ModelConfig& cfg, std::uint64_t seed, const GradCheckOptions& opts);

// Replaces parameter values with O(1) draws so gradients are not dwarfed by
// the finite-difference floor; LayerNorm gains stay near one.
void randomize_for_check(ParamList<double>& params, std::uint64_t seed);

Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0);

// sum(y * r) for a fixed random r, so no gradient cancels by symmetry.
Var<double> probe_loss(const Var<double>& y, std::uint64_t seed);

}  // namespace dtvit
