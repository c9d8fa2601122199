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

#include "dualtoken/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dualtoken/container.hpp"

namespace dtvit {

template <class T>
TrainState<T> init_train_state(const ModelConfig& cfg, std::uint64_t seed) {
  TrainState<T> s{build_model<T>(cfg, seed), {}, {}, 0, {}};
  for (const auto& p : s.model.params) {
    s.m.emplace_back(p.var.shape());
    s.v.emplace_back(p.var.shape());
  }
  return s;
}

std::vector<std::size_t> step_indices(std::uint64_t seed, std::size_t step, std::size_t batch, std::size_t n) {
  check(n > 0 && batch > 0, ErrorCode::kInvalidArgument, "step_indices: empty data or batch");
  std::vector<std::size_t> out;
  std::vector<std::size_t> perm;
  std::size_t perm_epoch = static_cast<std::size_t>(-1);
  for (std::size_t j = 0; j < batch; ++j) {
    const std::size_t flat = step * batch + j;
    const std::size_t epoch = flat / n;
    if (epoch != perm_epoch) {
      perm.resize(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::mt19937_64 rng(mix_seed(seed, "epoch" + std::to_string(epoch)));
      // Fisher-Yates with our own draws so the order does not depend on the
      // standard library's shuffle.
      for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng() % (i + 1)]);
      perm_epoch = epoch;
    }
    out.push_back(perm[flat % n]);
  }
  return out;
}

template <class T>
void train_steps(TrainState<T>& state, const SyntheticDataset& data, const TrainOptions& opts,
                 std::size_t steps) {
  auto& model = state.model;
  check(data.side == model.cfg.input_resolution, ErrorCode::kConfig,
        "train: data side " + std::to_string(data.side) + " does not match model resolution " +
            std::to_string(model.cfg.input_resolution));
  check(data.classes <= model.cfg.num_classes, ErrorCode::kConfig, "train: more classes than model outputs");
  check(opts.micro_batch > 0, ErrorCode::kInvalidArgument, "train: micro_batch must be positive");
  const T inv_batch = static_cast<T>(1.0 / static_cast<double>(opts.micro_batch));

  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t step = state.step;
    for (auto& p : model.params) p.var.zero_grad();
    double loss_sum = 0.0;
    try {
      for (std::size_t idx : step_indices(opts.seed, step, opts.micro_batch, data.size())) {
        GradTape<T> tape;
        TapeScope<T> scope(tape);
        const ForwardResult<T> r = forward(model, Var<T>(data.image<T>(idx)));
        const Var<T> loss = cross_entropy(r.logits, static_cast<std::size_t>(data.labels[idx]));
        loss_sum += static_cast<double>(loss.value()[0]);
        backward(tape, scale(loss, inv_batch));
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      fail(ErrorCode::kDivergence, "training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    const double loss = loss_sum / static_cast<double>(opts.micro_batch);
    check(std::isfinite(loss), ErrorCode::kDivergence,
          "training diverged at step " + std::to_string(step) + ": loss is not finite");

    const double t = static_cast<double>(step + 1);
    const double bc1 = 1.0 - std::pow(opts.beta1, t);
    const double bc2 = 1.0 - std::pow(opts.beta2, t);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      Var<T>& var = model.params[i].var;
      auto w = var.value().data();
      if (!var.has_grad()) continue;
      const auto g = std::as_const(var.value()).grad();
      if (opts.optimizer == OptimizerKind::kSgd) {
        for (std::size_t j = 0; j < w.size(); ++j) w[j] = static_cast<T>(w[j] - opts.lr * g[j]);
        continue;
      }
      auto m = state.m[i].data();
      auto v = state.v[i].data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = static_cast<T>(opts.beta1 * m[j] + (1.0 - opts.beta1) * g[j]);
        v[j] = static_cast<T>(opts.beta2 * v[j] + (1.0 - opts.beta2) * g[j] * g[j]);
        const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opts.eps) + opts.weight_decay * w[j];
        w[j] = static_cast<T>(w[j] - opts.lr * update);
      }
    }
    for (auto& p : model.params) p.var.zero_grad();
    state.loss_history.push_back(loss);
    state.step = step + 1;
    if (opts.checkpoint_every > 0 && state.step % opts.checkpoint_every == 0) {
      check(!opts.checkpoint_path.empty(), ErrorCode::kInvalidArgument, "train: checkpoint path not set");
      save_train_state(state, opts.checkpoint_path);
    }
  }
}

template <class T>
TrainState<T> train_toy(const ModelConfig& cfg, const SyntheticDataset& data, std::size_t steps,
                        const TrainOptions& opts, std::uint64_t init_seed) {
  TrainState<T> s = init_train_state<T>(cfg, init_seed);
  train_steps(s, data, opts, steps);
  return s;
}

template <class T>
void save_train_state(const TrainState<T>& s, const std::string& path) {
  std::vector<StoredTensor> ts;
  const auto& params = s.model.params;
  for (const auto& p : params) ts.push_back(to_stored(p.name, p.var.value()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ts.push_back(to_stored("opt.m." + params[i].name, s.m[i]));
    ts.push_back(to_stored("opt.v." + params[i].name, s.v[i]));
  }
  ts.push_back(StoredTensor{"train.step", DType::kF64, {1}, {static_cast<double>(s.step)}});
  if (!s.loss_history.empty())
    ts.push_back(StoredTensor{"train.loss_history", DType::kF64, {s.loss_history.size()}, s.loss_history});
  write_container(path, ts);
}

template <class T>
TrainState<T> load_train_state(const std::string& path, const ModelConfig& cfg) {
  const auto ts = read_container(path);
  TrainState<T> s = init_train_state<T>(cfg, 0);
  assign_parameters(s.model, ts);
  for (std::size_t i = 0; i < s.model.params.size(); ++i) {
    const std::string& name = s.model.params[i].name;
    const StoredTensor& m = find_tensor(ts, "opt.m." + name);
    const StoredTensor& v = find_tensor(ts, "opt.v." + name);
    check(m.shape == s.m[i].shape() && v.shape == s.v[i].shape(), ErrorCode::kShapeMismatch,
          "optimizer moments for '" + name + "' do not match the model");
    s.m[i] = from_stored<T>(m);
    s.v[i] = from_stored<T>(v);
  }
  s.step = static_cast<std::size_t>(find_tensor(ts, "train.step").values.at(0));
  if (s.step > 0) s.loss_history = find_tensor(ts, "train.loss_history").values;
  check(s.loss_history.size() == s.step, ErrorCode::kFormat,
        path + ": loss history length does not match the step counter");
  return s;
}

template <class T>
std::size_t argmax(const Tensor<T>& logits) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.size(); ++j)
    if (logits[j] > logits[best]) best = j;
  return best;
}

template <class T>
double evaluate(const Model<T>& m, const SyntheticDataset& data) {
  check(data.size() > 0, ErrorCode::kInvalidArgument, "evaluate: empty dataset");
  NoGradScope<T> no_grad;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor<T> logits = forward(m, Var<T>(data.image<T>(i))).logits.value();
    if (argmax(logits) == static_cast<std::size_t>(data.labels[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

#define DTVIT_INSTANTIATE(T)                                                                          \
  template TrainState<T> init_train_state<T>(const ModelConfig&, std::uint64_t);                      \
  template void train_steps<T>(TrainState<T>&, const SyntheticDataset&, const TrainOptions&, std::size_t); \
  template TrainState<T> train_toy<T>(const ModelConfig&, const SyntheticDataset&, std::size_t,       \
                                      const TrainOptions&, std::uint64_t);                            \
  template void save_train_state<T>(const TrainState<T>&, const std::string&);                        \
  template TrainState<T> load_train_state<T>(const std::string&, const ModelConfig&);                 \
  template std::size_t argmax<T>(const Tensor<T>&);                                                   \
  template double evaluate<T>(const Model<T>&, const SyntheticDataset&);

DTVIT_INSTANTIATE(float)
DTVIT_INSTANTIATE(double)

}  // namespace dtvit
