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

// Reverse-mode differentiation.
//
// A Var is a shared handle to a node holding a Tensor (whose grad slot
// receives d(loss)/d(node)). Operations on Vars evaluate eagerly; when a
// GradTape is active on the current thread and any input requires grad, the
// op appends a backward closure to that tape. backward() replays the tape in
// reverse record order.
//
// Tapes are single-writer: one active tape per thread.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_set>
#include <vector>

#include "dualtoken/kernels.hpp"
#include "dualtoken/tensor.hpp"

namespace dtvit {

inline constexpr double kLayerNormEps = 1e-6;

template <class T>
struct Node {
  Tensor<T> value;
  bool requires_grad = false;
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>(Node<T>{std::move(value), requires_grad})) {}

  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->value.has_grad(); }
  // Gradient as a tensor; zeros when nothing has flowed into this node.
  Tensor<T> grad() const;
  void zero_grad() { node_->value.zero_grad(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
class GradTape {
 public:
  using BackwardFn = std::function<void()>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;
  ~GradTape();

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  void clear();

  void record(std::shared_ptr<Node<T>> output, BackwardFn fn);
  bool produced(const Node<T>* node) const { return outputs_.contains(node); }

  // Number of records visited by the most recent backward().
  std::size_t last_visits() const { return last_visits_; }

  static GradTape* active();

 private:
  template <class U>
  friend class TapeScope;
  template <class U>
  friend void backward(GradTape<U>& tape, const Var<U>& loss);

  struct Record {
    std::shared_ptr<Node<T>> output;
    BackwardFn fn;
  };
  std::vector<Record> records_;
  std::unordered_set<const Node<T>*> outputs_;
  std::size_t last_visits_ = 0;
};

// Makes `tape` the active tape of this thread for the scope's lifetime.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(GradTape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape<T>* previous_;
};

// Suspends recording (e.g. for finite-difference evaluations).
template <class T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  GradTape<T>* previous_;
};

// Populates grad of every requires-grad node reachable from `loss` through
// `tape`. Leaf grads accumulate across calls; call zero_grad between steps.
template <class T>
void backward(GradTape<T>& tape, const Var<T>& loss);

enum class ElementwiseOp { kAdd, kSub, kMul, kScale, kGelu };

template <class T> Var<T> elementwise(ElementwiseOp op, const Var<T>& a, const Var<T>& b);
template <class T> Var<T> elementwise(ElementwiseOp op, const Var<T>& a, T scalar);

template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);
template <class T> Var<T> gelu(const Var<T>& a);
template <class T> Var<T> sigmoid(const Var<T>& a);

template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> transpose(const Var<T>& a);

// `bias` may be undefined.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const kernels::Conv2dSpec& spec);
template <class T> Var<T> avgpool2d(const Var<T>& x, std::size_t k = 2);
template <class T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = kLayerNormEps);
template <class T> Var<T> softmax(const Var<T>& x);
template <class T> Var<T> bilinear_resize(const Var<T>& x, std::size_t out_h, std::size_t out_w);

template <class T> Var<T> reshape(const Var<T>& x, Shape shape);
template <class T> Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t end);
template <class T> Var<T> concat_cols(std::span<const Var<T>> parts);
template <class T> Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end);
template <class T> Var<T> concat_rows(std::span<const Var<T>> parts);
// out row i = x row index[i]; rows are the leading axis of a rank-2 input.
template <class T> Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> index);

// x: N x C plus b: C on every row.
template <class T> Var<T> add_row_vector(const Var<T>& x, const Var<T>& b);
// x: N x C scaled by s: N (one factor per row).
template <class T> Var<T> scale_rows(const Var<T>& x, const Var<T>& s);
// x: N x C scaled by c: C (one factor per column).
template <class T> Var<T> scale_cols(const Var<T>& x, const Var<T>& c);
// N x C -> 1 x C
template <class T> Var<T> mean_rows(const Var<T>& x);
template <class T> Var<T> sum(const Var<T>& x);
template <class T> Var<T> mean(const Var<T>& x);

// -log softmax(logits)[label]; logits has K entries.
template <class T> Var<T> cross_entropy(const Var<T>& logits, std::size_t label);

}  // namespace dtvit
