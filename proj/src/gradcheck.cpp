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

#include "dualtoken/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace dtvit {
namespace {

double eval_scalar(const std::function<Var<double>()>& f) {
  NoGradScope<double> no_record;
  Var<double> y = f();
  check(y.size() == 1, ErrorCode::kInvalidArgument, "grad_check: function must return a scalar");
  return y.value()[0];
}

}  // namespace

GradCheckReport grad_check(const std::function<Var<double>()>& f, std::span<const Var<double>> leaves,
                           const GradCheckOptions& opts, std::span<const std::string> leaf_names) {
  for (const auto& leaf : leaves) {
    check(leaf.requires_grad(), ErrorCode::kInvalidArgument, "grad_check: leaf does not require grad");
    leaf.node()->value.clear_grad();
  }
  GradTape<double> tape;
  {
    TapeScope<double> scope(tape);
    Var<double> y = f();
    check(y.size() == 1, ErrorCode::kInvalidArgument, "grad_check: function must return a scalar");
    backward(tape, y);
  }

  GradCheckReport report;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const Var<double>& leaf = leaves[li];
    const Tensor<double> analytic = leaf.grad();
    auto data = leaf.node()->value.data();
    std::vector<std::size_t> coords(data.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_leaf > 0 && coords.size() > opts.max_coords_per_leaf) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_leaf);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double x0 = data[i];
      const double h = opts.step_scale * std::max(1.0, std::abs(x0));
      data[i] = x0 + h;
      const double fp = eval_scalar(f);
      data[i] = x0 - h;
      const double fm = eval_scalar(f);
      data[i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err || report.worst.empty()) {
        report.max_rel_err = std::max(report.max_rel_err, rel);
        std::ostringstream os;
        os << (li < leaf_names.size() ? leaf_names[li] : "leaf" + std::to_string(li)) << "[" << i
           << "] analytic=" << a << " numeric=" << numeric;
        if (rel >= report.max_rel_err) report.worst = os.str();
      }
    }
  }
  report.pass = report.max_rel_err <= opts.tol;
  return report;
}

GradCheckReport grad_check(const std::function<Var<double>(const Var<double>&)>& f,
                           const Tensor<double>& x, double tol) {
  Var<double> leaf = Var<double>::parameter(x);
  std::vector<Var<double>> leaves{leaf};
  GradCheckOptions opts;
  opts.tol = tol;
  return grad_check([&] { return f(leaf); }, leaves, opts);
}

}  // namespace dtvit
