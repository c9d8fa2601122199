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
#include <functional>
#include <span>
#include <string>

#include "dualtoken/autograd.hpp"

namespace dtvit {

struct GradCheckOptions {
  double tol = 1e-4;
  // Central-difference step is step_scale * max(1, |x_i|).
  double step_scale = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
  double abs_floor = 1e-3;
  // 0 checks every coordinate; otherwise a seeded sample of this many per leaf.
  std::size_t max_coords_per_leaf = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  std::size_t coords_checked = 0;
  std::string worst;  // "<leaf>[<index>] analytic=<a> numeric=<n>"
};

// `f` must read the leaves' current values and return a scalar. Leaves are
// perturbed in place and restored.
GradCheckReport grad_check(const std::function<Var<double>()>& f, std::span<const Var<double>> leaves,
                           const GradCheckOptions& opts = {},
                           std::span<const std::string> leaf_names = {});

GradCheckReport grad_check(const std::function<Var<double>(const Var<double>&)>& f,
                           const Tensor<double>& x, double tol = 1e-4);

}  // namespace dtvit
