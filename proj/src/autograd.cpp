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

#include "dualtoken/autograd.hpp"

#include <cmath>
#include <string>

namespace dtvit {
namespace {

template <class T>
thread_local GradTape<T>* t_active_tape = nullptr;

template <class T>
using GradFn = std::function<void(const Tensor<T>& grad_out)>;

template <class T>
void accumulate(const Var<T>& v, std::span<const T> g) {
  if (!v.requires_grad()) return;
  auto dst = v.node()->value.ensure_grad();
  check(dst.size() == g.size(), ErrorCode::kShapeMismatch, "gradient length mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <class T>
void accumulate(const Var<T>& v, const Tensor<T>& g) {
  accumulate(v, g.data());
}

template <class T>
Var<T> finish(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs, GradFn<T> fn) {
  check(value.all_finite(), ErrorCode::kNonFinite, std::string(op) + ": non-finite output");
  bool rg = false;
  for (const auto& v : inputs) rg = rg || v.requires_grad();
  Var<T> out(std::move(value), rg);
  GradTape<T>* tape = t_active_tape<T>;
  if (rg && tape) {
    auto node = out.ptr();
    tape->record(node, [node, fn = std::move(fn)] {
      if (!node->value.has_grad()) return;
      auto g = node->value.grad();
      fn(Tensor<T>(node->value.shape(), std::vector<T>(g.begin(), g.end())));
    });
  }
  return out;
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  check(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
        std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class T>
void require_rank2(const Var<T>& a, const char* op) {
  check(a.value().rank() == 2, ErrorCode::kShapeMismatch,
        std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

}  // namespace

template <class T>
Tensor<T> Var<T>::grad() const {
  if (!node_->value.has_grad()) return Tensor<T>(node_->value.shape());
  return node_->value.grad_tensor();
}

template <class T>
GradTape<T>::~GradTape() {
  if (t_active_tape<T> == this) t_active_tape<T> = nullptr;
}

template <class T>
void GradTape<T>::clear() {
  records_.clear();
  outputs_.clear();
}

template <class T>
void GradTape<T>::record(std::shared_ptr<Node<T>> output, BackwardFn fn) {
  outputs_.insert(output.get());
  records_.push_back({std::move(output), std::move(fn)});
}

template <class T>
GradTape<T>* GradTape<T>::active() {
  return t_active_tape<T>;
}

template <class T>
TapeScope<T>::TapeScope(GradTape<T>& tape) : previous_(t_active_tape<T>) {
  t_active_tape<T> = &tape;
}

template <class T>
TapeScope<T>::~TapeScope() {
  t_active_tape<T> = previous_;
}

template <class T>
NoGradScope<T>::NoGradScope() : previous_(t_active_tape<T>) {
  t_active_tape<T> = nullptr;
}

template <class T>
NoGradScope<T>::~NoGradScope() {
  t_active_tape<T> = previous_;
}

template <class T>
void backward(GradTape<T>& tape, const Var<T>& loss) {
  tape.last_visits_ = 0;
  if (tape.records_.empty()) return;
  check(loss.defined() && loss.size() == 1, ErrorCode::kInvalidArgument,
        "backward: loss must be a scalar");
  check(tape.produced(loss.node()), ErrorCode::kInvalidArgument,
        "backward: loss was not produced under this tape");
  loss.node()->value.ensure_grad()[0] = T(1);
  NoGradScope<T> no_record;
  for (auto it = tape.records_.rbegin(); it != tape.records_.rend(); ++it) {
    ++tape.last_visits_;
    it->fn();
  }
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return finish<T>("add", std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
    accumulate(a, g);
    accumulate(b, g);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return finish<T>("sub", std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
    accumulate(a, g);
    if (!b.requires_grad()) return;
    Tensor<T> neg(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
    accumulate(b, neg);
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return finish<T>("mul", std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
    Tensor<T> ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * b.value()[i];
      gb[i] = g[i] * a.value()[i];
    }
    accumulate(a, ga);
    accumulate(b, gb);
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  return finish<T>("scale", std::move(out), {a}, [a, s](const Tensor<T>& g) {
    Tensor<T> ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * s;
    accumulate(a, ga);
  });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + s;
  return finish<T>("add_scalar", std::move(out), {a}, [a](const Tensor<T>& g) { accumulate(a, g); });
}

template <class T>
Var<T> gelu(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kernels::gelu(a.value()[i]);
  return finish<T>("gelu", std::move(out), {a}, [a](const Tensor<T>& g) {
    Tensor<T> ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * kernels::gelu_grad(a.value()[i]);
    accumulate(a, ga);
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kernels::sigmoid(a.value()[i]);
  Tensor<T> y = out;
  return finish<T>("sigmoid", std::move(out), {a}, [a, y](const Tensor<T>& g) {
    Tensor<T> ga(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * y[i] * (T(1) - y[i]);
    accumulate(a, ga);
  });
}

template <class T>
Var<T> elementwise(ElementwiseOp op, const Var<T>& a, const Var<T>& b) {
  switch (op) {
    case ElementwiseOp::kAdd: return add(a, b);
    case ElementwiseOp::kSub: return sub(a, b);
    case ElementwiseOp::kMul: return mul(a, b);
    case ElementwiseOp::kScale:
      check(b.size() == 1, ErrorCode::kShapeMismatch, "scale: factor must be a scalar");
      return scale(a, b.value()[0]);
    case ElementwiseOp::kGelu: return gelu(a);
  }
  fail(ErrorCode::kInvalidArgument, "elementwise: unknown op");
}

template <class T>
Var<T> elementwise(ElementwiseOp op, const Var<T>& a, T scalar) {
  switch (op) {
    case ElementwiseOp::kAdd: return add_scalar(a, scalar);
    case ElementwiseOp::kSub: return add_scalar(a, -scalar);
    case ElementwiseOp::kMul:
    case ElementwiseOp::kScale: return scale(a, scalar);
    case ElementwiseOp::kGelu: return gelu(a);
  }
  fail(ErrorCode::kInvalidArgument, "elementwise: unknown op");
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = kernels::matmul(a.value(), b.value());
  kernels::add_macs(static_cast<std::uint64_t>(a.dim(0)) * a.dim(1) * b.dim(1));
  return finish<T>("matmul", std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
    if (a.requires_grad()) accumulate(a, kernels::matmul_nt(g, b.value()));
    if (b.requires_grad()) accumulate(b, kernels::matmul_tn(a.value(), g));
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  return finish<T>("transpose", kernels::transpose(a.value()), {a},
                   [a](const Tensor<T>& g) { accumulate(a, kernels::transpose(g)); });
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const kernels::Conv2dSpec& spec) {
  const Tensor<T>* b = bias.defined() ? &bias.value() : nullptr;
  Tensor<T> out = kernels::conv2d(x.value(), w.value(), b, spec);
  kernels::add_macs(static_cast<std::uint64_t>(out.dim(0)) * out.dim(1) * w.dim(0) * w.dim(1) *
                    w.dim(2) * w.dim(3));
  if (bias.defined()) {
    return finish<T>("conv2d", std::move(out), {x, w, bias}, [x, w, bias, spec](const Tensor<T>& g) {
      Tensor<T> gx, gw, gb;
      kernels::conv2d_backward<T>(x.value(), w.value(), spec, g, x.requires_grad() ? &gx : nullptr,
                               w.requires_grad() ? &gw : nullptr, bias.requires_grad() ? &gb : nullptr);
      if (x.requires_grad()) accumulate(x, gx);
      if (w.requires_grad()) accumulate(w, gw);
      if (bias.requires_grad()) accumulate(bias, gb);
    });
  }
  return finish<T>("conv2d", std::move(out), {x, w}, [x, w, spec](const Tensor<T>& g) {
    Tensor<T> gx, gw;
    kernels::conv2d_backward<T>(x.value(), w.value(), spec, g, x.requires_grad() ? &gx : nullptr,
                             w.requires_grad() ? &gw : nullptr, nullptr);
    if (x.requires_grad()) accumulate(x, gx);
    if (w.requires_grad()) accumulate(w, gw);
  });
}

template <class T>
Var<T> avgpool2d(const Var<T>& x, std::size_t k) {
  return finish<T>("avgpool2d", kernels::avgpool2d(x.value(), k), {x}, [x, k](const Tensor<T>& g) {
    accumulate(x, kernels::avgpool2d_backward(x.shape(), k, g));
  });
}

template <class T>
Var<T> layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  auto cache = std::make_shared<kernels::LayerNormCache>();
  Tensor<T> out = kernels::layernorm(x.value(), gamma.value(), beta.value(), eps, cache.get());
  return finish<T>("layernorm", std::move(out), {x, gamma, beta},
                   [x, gamma, beta, cache](const Tensor<T>& g) {
                     Tensor<T> gx, gg, gb;
                     kernels::layernorm_backward(x.value(), gamma.value(), *cache, g,
                                                 x.requires_grad() ? &gx : nullptr,
                                                 gamma.requires_grad() ? &gg : nullptr,
                                                 beta.requires_grad() ? &gb : nullptr);
                     if (x.requires_grad()) accumulate(x, gx);
                     if (gamma.requires_grad()) accumulate(gamma, gg);
                     if (beta.requires_grad()) accumulate(beta, gb);
                   });
}

template <class T>
Var<T> softmax(const Var<T>& x) {
  Tensor<T> out = kernels::softmax(x.value());
  Tensor<T> y = out;
  return finish<T>("softmax", std::move(out), {x},
                   [x, y](const Tensor<T>& g) { accumulate(x, kernels::softmax_backward(y, g)); });
}

template <class T>
Var<T> bilinear_resize(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  return finish<T>("bilinear_resize", kernels::bilinear_resize(x.value(), out_h, out_w), {x},
                   [x](const Tensor<T>& g) {
                     accumulate(x, kernels::bilinear_resize_backward(x.shape(), g));
                   });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  return finish<T>("reshape", x.value().reshaped(std::move(shape)), {x},
                   [x](const Tensor<T>& g) { accumulate(x, g.data()); });
}

template <class T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_cols");
  const std::size_t n = x.dim(0), c = x.dim(1);
  check(begin < end && end <= c, ErrorCode::kShapeMismatch, "slice_cols: bad range");
  const std::size_t w = end - begin;
  Tensor<T> out({n, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.value()[i * c + begin + j];
  return finish<T>("slice_cols", std::move(out), {x}, [x, begin, n, c, w](const Tensor<T>& g) {
    Tensor<T> gx({n, c});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] = g[i * w + j];
    accumulate(x, gx);
  });
}

template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  check(!parts.empty(), ErrorCode::kInvalidArgument, "concat_cols: no inputs");
  const std::size_t n = parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    check(p.dim(0) == n, ErrorCode::kShapeMismatch, "concat_cols: row counts differ");
    total += p.dim(1);
  }
  Tensor<T> out({n, total});
  std::size_t off = 0;
  bool rg = false;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + off + j] = p.value()[i * w + j];
    off += w;
    rg = rg || p.requires_grad();
  }
  std::vector<Var<T>> keep(parts.begin(), parts.end());
  check(out.all_finite(), ErrorCode::kNonFinite, "concat_cols: non-finite output");
  Var<T> result(std::move(out), rg);
  if (rg && GradTape<T>::active()) {
    auto node = result.ptr();
    GradTape<T>::active()->record(node, [node, keep, n, total] {
      if (!node->value.has_grad()) return;
      auto g = node->value.grad();
      std::size_t o = 0;
      for (const auto& p : keep) {
        const std::size_t w = p.dim(1);
        if (p.requires_grad()) {
          Tensor<T> gp({n, w});
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) gp[i * w + j] = g[i * total + o + j];
          accumulate(p, gp);
        }
        o += w;
      }
    });
  }
  return result;
}

template <class T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  check(begin < end && end <= n, ErrorCode::kShapeMismatch, "slice_rows: bad range");
  std::vector<T> data(x.value().data().begin() + begin * c, x.value().data().begin() + end * c);
  return finish<T>("slice_rows", Tensor<T>({end - begin, c}, std::move(data)), {x},
                   [x, begin, c](const Tensor<T>& g) {
                     Tensor<T> gx(x.shape());
                     std::copy(g.data().begin(), g.data().end(), gx.data().begin() + begin * c);
                     accumulate(x, gx);
                   });
}

template <class T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  check(!parts.empty(), ErrorCode::kInvalidArgument, "concat_rows: no inputs");
  const std::size_t c = parts[0].dim(1);
  std::vector<T> data;
  std::size_t rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    check(p.dim(1) == c, ErrorCode::kShapeMismatch, "concat_rows: column counts differ");
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    rows += p.dim(0);
    rg = rg || p.requires_grad();
  }
  Var<T> result(Tensor<T>({rows, c}, std::move(data)), rg);
  std::vector<Var<T>> keep(parts.begin(), parts.end());
  if (rg && GradTape<T>::active()) {
    auto node = result.ptr();
    GradTape<T>::active()->record(node, [node, keep] {
      if (!node->value.has_grad()) return;
      auto g = node->value.grad();
      std::size_t o = 0;
      for (const auto& p : keep) {
        accumulate<T>(p, g.subspan(o, p.size()));
        o += p.size();
      }
    });
  }
  return result;
}

template <class T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> index) {
  require_rank2(x, "gather_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  Tensor<T> out({index.size(), c});
  for (std::size_t i = 0; i < index.size(); ++i) {
    check(index[i] < n, ErrorCode::kInvalidArgument, "gather_rows: index out of range");
    std::copy_n(x.value().data().begin() + index[i] * c, c, out.data().begin() + i * c);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return finish<T>("gather_rows", std::move(out), {x}, [x, idx, c](const Tensor<T>& g) {
    Tensor<T> gx(x.shape());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) gx[idx[i] * c + j] += g[i * c + j];
    accumulate(x, gx);
  });
}

template <class T>
Var<T> add_row_vector(const Var<T>& x, const Var<T>& b) {
  require_rank2(x, "add_row_vector");
  const std::size_t n = x.dim(0), c = x.dim(1);
  check(b.size() == c, ErrorCode::kShapeMismatch, "add_row_vector: vector length mismatch");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.value()[i * c + j] + b.value()[j];
  return finish<T>("add_row_vector", std::move(out), {x, b}, [x, b, n, c](const Tensor<T>& g) {
    accumulate(x, g);
    if (!b.requires_grad()) return;
    std::vector<double> acc(c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) acc[j] += g[i * c + j];
    Tensor<T> gb(b.shape());
    for (std::size_t j = 0; j < c; ++j) gb[j] = static_cast<T>(acc[j]);
    accumulate(b, gb);
  });
}

template <class T>
Var<T> scale_rows(const Var<T>& x, const Var<T>& s) {
  require_rank2(x, "scale_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  check(s.size() == n, ErrorCode::kShapeMismatch, "scale_rows: factor count mismatch");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.value()[i * c + j] * s.value()[i];
  return finish<T>("scale_rows", std::move(out), {x, s}, [x, s, n, c](const Tensor<T>& g) {
    Tensor<T> gx(x.shape()), gs(s.shape());
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        gx[i * c + j] = g[i * c + j] * s.value()[i];
        acc += static_cast<double>(g[i * c + j]) * x.value()[i * c + j];
      }
      gs[i] = static_cast<T>(acc);
    }
    accumulate(x, gx);
    accumulate(s, gs);
  });
}

template <class T>
Var<T> scale_cols(const Var<T>& x, const Var<T>& cv) {
  require_rank2(x, "scale_cols");
  const std::size_t n = x.dim(0), c = x.dim(1);
  check(cv.size() == c, ErrorCode::kShapeMismatch, "scale_cols: factor count mismatch");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.value()[i * c + j] * cv.value()[j];
  return finish<T>("scale_cols", std::move(out), {x, cv}, [x, cv, n, c](const Tensor<T>& g) {
    Tensor<T> gx(x.shape());
    std::vector<double> acc(c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        gx[i * c + j] = g[i * c + j] * cv.value()[j];
        acc[j] += static_cast<double>(g[i * c + j]) * x.value()[i * c + j];
      }
    Tensor<T> gc(cv.shape());
    for (std::size_t j = 0; j < c; ++j) gc[j] = static_cast<T>(acc[j]);
    accumulate(x, gx);
    accumulate(cv, gc);
  });
}

template <class T>
Var<T> mean_rows(const Var<T>& x) {
  require_rank2(x, "mean_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  std::vector<double> acc(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) acc[j] += x.value()[i * c + j];
  Tensor<T> out({1, c});
  for (std::size_t j = 0; j < c; ++j) out[j] = static_cast<T>(acc[j] / static_cast<double>(n));
  return finish<T>("mean_rows", std::move(out), {x}, [x, n, c](const Tensor<T>& g) {
    Tensor<T> gx(x.shape());
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] = static_cast<T>(g[j] * inv);
    accumulate(x, gx);
  });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x.value().data()) acc += v;
  return finish<T>("sum", Tensor<T>::scalar(static_cast<T>(acc)), {x}, [x](const Tensor<T>& g) {
    accumulate(x, Tensor<T>(x.shape(), g[0]));
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x.value().data()) acc += v;
  const double n = static_cast<double>(x.size());
  return finish<T>("mean", Tensor<T>::scalar(static_cast<T>(acc / n)), {x}, [x, n](const Tensor<T>& g) {
    accumulate(x, Tensor<T>(x.shape(), static_cast<T>(g[0] / n)));
  });
}

template <class T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t label) {
  const std::size_t k = logits.size();
  check(label < k, ErrorCode::kInvalidArgument,
        "cross_entropy: label " + std::to_string(label) + " out of range for " + std::to_string(k) +
            " classes");
  const Tensor<T> flat = logits.value().reshaped({1, k});
  Tensor<T> p = kernels::softmax(flat);
  double mx = flat[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(flat[j]));
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += std::exp(flat[j] - mx);
  const double loss = -(flat[label] - mx - std::log(s));
  return finish<T>("cross_entropy", Tensor<T>::scalar(static_cast<T>(loss)), {logits},
                   [logits, p, label, k](const Tensor<T>& g) {
                     Tensor<T> gl(logits.shape());
                     for (std::size_t j = 0; j < k; ++j)
                       gl[j] = g[0] * (p[j] - (j == label ? T(1) : T(0)));
                     accumulate(logits, gl);
                   });
}

#define DTVIT_INSTANTIATE(T)                                                                  \
  template class Var<T>;                                                                      \
  template class GradTape<T>;                                                                 \
  template class TapeScope<T>;                                                                \
  template class NoGradScope<T>;                                                              \
  template void backward<T>(GradTape<T>&, const Var<T>&);                                     \
  template Var<T> elementwise<T>(ElementwiseOp, const Var<T>&, const Var<T>&);                \
  template Var<T> elementwise<T>(ElementwiseOp, const Var<T>&, T);                            \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> scale<T>(const Var<T>&, T);                                                 \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                            \
  template Var<T> gelu<T>(const Var<T>&);                                                     \
  template Var<T> sigmoid<T>(const Var<T>&);                                                  \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                    \
  template Var<T> transpose<T>(const Var<T>&);                                                \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&,                      \
                            const kernels::Conv2dSpec&);                                      \
  template Var<T> avgpool2d<T>(const Var<T>&, std::size_t);                                   \
  template Var<T> layernorm<T>(const Var<T>&, const Var<T>&, const Var<T>&, double);          \
  template Var<T> softmax<T>(const Var<T>&);                                                  \
  template Var<T> bilinear_resize<T>(const Var<T>&, std::size_t, std::size_t);                \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                           \
  template Var<T> slice_cols<T>(const Var<T>&, std::size_t, std::size_t);                     \
  template Var<T> concat_cols<T>(std::span<const Var<T>>);                                    \
  template Var<T> slice_rows<T>(const Var<T>&, std::size_t, std::size_t);                     \
  template Var<T> concat_rows<T>(std::span<const Var<T>>);                                    \
  template Var<T> gather_rows<T>(const Var<T>&, std::span<const std::size_t>);                \
  template Var<T> add_row_vector<T>(const Var<T>&, const Var<T>&);                            \
  template Var<T> scale_rows<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> scale_cols<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> mean_rows<T>(const Var<T>&);                                                \
  template Var<T> sum<T>(const Var<T>&);                                                      \
  template Var<T> mean<T>(const Var<T>&);                                                     \
  template Var<T> cross_entropy<T>(const Var<T>&, std::size_t);

DTVIT_INSTANTIATE(float)
DTVIT_INSTANTIATE(double)

}  // namespace dtvit
