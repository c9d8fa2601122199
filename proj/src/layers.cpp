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

#include "dualtoken/layers.hpp"

#include <cmath>
#include <random>

namespace dtvit {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix64(seed ^ splitmix64(h));
}

template <class T>
Tensor<T> init_params(const Shape& shape, InitScheme scheme, std::uint64_t seed, double stddev) {
  switch (scheme) {
    case InitScheme::kZeros: return Tensor<T>(shape, T(0));
    case InitScheme::kOnes: return Tensor<T>(shape, T(1));
    case InitScheme::kTruncNormal: break;
  }
  Tensor<T> t(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : t.data()) {
    double z;
    do {
      z = normal(rng);
    } while (std::abs(z) > 2.0);
    v = static_cast<T>(z * stddev);
  }
  return t;
}

template <class T>
Var<T> ParamBuilder<T>::make(const std::string& name, const Shape& shape, InitScheme scheme) {
  for (const auto& p : params_)
    check(p.name != name, ErrorCode::kConfig, "duplicate parameter name " + name);
  Var<T> v = Var<T>::parameter(init_params<T>(shape, scheme, mix_seed(seed_, name)));
  params_.push_back({name, v});
  return v;
}

template <class T>
LayerNorm<T>::LayerNorm(ParamBuilder<T>& pb, const std::string& name, std::size_t channels)
    : gamma(pb.make(name + ".gamma", {channels}, InitScheme::kOnes)),
      beta(pb.make(name + ".beta", {channels}, InitScheme::kZeros)) {}

template <class T>
Linear<T>::Linear(ParamBuilder<T>& pb, const std::string& name, std::size_t in, std::size_t out,
                  bool with_bias)
    : in(in), out(out), weight(pb.make(name + ".weight", {in, out}, InitScheme::kTruncNormal)) {
  if (with_bias) bias = pb.make(name + ".bias", {out}, InitScheme::kZeros);
}

template <class T>
Var<T> Linear<T>::forward(const Var<T>& x) const {
  check(x.value().rank() == 2 && x.dim(1) == in, ErrorCode::kShapeMismatch,
        "linear: input " + shape_str(x.shape()) + " does not have " + std::to_string(in) + " channels");
  Var<T> y = matmul(x, weight);
  return bias.defined() ? add_row_vector(y, bias) : y;
}

template <class T>
Conv2d<T>::Conv2d(ParamBuilder<T>& pb, const std::string& name, std::size_t cin, std::size_t cout,
                  std::size_t kernel, const kernels::Conv2dSpec& spec, bool with_bias)
    : spec(spec) {
  check(spec.groups > 0 && cin % spec.groups == 0 && cout % spec.groups == 0, ErrorCode::kConfig,
        name + ": channels not divisible by groups");
  weight = pb.make(name + ".weight", {kernel, kernel, cin / spec.groups, cout}, InitScheme::kTruncNormal);
  if (with_bias) bias = pb.make(name + ".bias", {cout}, InitScheme::kZeros);
}

template <class T>
MultiHeadAttention<T>::MultiHeadAttention(ParamBuilder<T>& pb, const std::string& name, std::size_t dim,
                                          std::size_t heads)
    : heads(heads), dim(dim) {
  check(heads > 0 && dim % heads == 0, ErrorCode::kConfig,
        name + ": channels " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
            " heads");
  q_proj = Linear<T>(pb, name + ".q", dim, dim);
  k_proj = Linear<T>(pb, name + ".k", dim, dim);
  v_proj = Linear<T>(pb, name + ".v", dim, dim);
  out_proj = Linear<T>(pb, name + ".out", dim, dim);
}

template <class T>
AttentionOutput<T> MultiHeadAttention<T>::forward(const Var<T>& q_src, const Var<T>& kv_src) const {
  check(q_src.value().rank() == 2 && kv_src.value().rank() == 2 && q_src.dim(1) == dim &&
            kv_src.dim(1) == dim,
        ErrorCode::kShapeMismatch,
        "attention: sources " + shape_str(q_src.shape()) + " / " + shape_str(kv_src.shape()) +
            " do not have " + std::to_string(dim) + " channels");
  const Var<T> q = q_proj.forward(q_src);
  const Var<T> k = k_proj.forward(kv_src);
  const Var<T> v = v_proj.forward(kv_src);
  const std::size_t d = head_dim();
  const T scale_factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

  AttentionOutput<T> result;
  result.attention = Tensor<T>({q_src.dim(0), kv_src.dim(0)});
  std::vector<Var<T>> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Var<T> qh = heads == 1 ? q : slice_cols(q, h * d, (h + 1) * d);
    const Var<T> kh = heads == 1 ? k : slice_cols(k, h * d, (h + 1) * d);
    const Var<T> vh = heads == 1 ? v : slice_cols(v, h * d, (h + 1) * d);
    const Var<T> weights = softmax(scale(matmul(qh, transpose(kh)), scale_factor));
    auto acc = result.attention.data();
    const auto w = weights.value().data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w[i];
    parts.push_back(matmul(weights, vh));
  }
  for (auto& a : result.attention.data()) a = static_cast<T>(a / static_cast<T>(heads));
  const Var<T> merged = heads == 1 ? parts[0] : concat_cols<T>(parts);
  result.out = out_proj.forward(merged);
  return result;
}

#define DTVIT_INSTANTIATE(T)                                                               \
  template Tensor<T> init_params<T>(const Shape&, InitScheme, std::uint64_t, double);      \
  template class ParamBuilder<T>;                                                          \
  template struct LayerNorm<T>;                                                            \
  template struct Linear<T>;                                                               \
  template struct Conv2d<T>;                                                               \
  template struct MultiHeadAttention<T>;

DTVIT_INSTANTIATE(float)
DTVIT_INSTANTIATE(double)

}  // namespace dtvit
