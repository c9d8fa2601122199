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

// Parameterised layers built from autograd primitives.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualtoken/autograd.hpp"

namespace dtvit {

enum class InitScheme { kTruncNormal, kZeros, kOnes };

inline constexpr double kInitStd = 0.02;

// Deterministic in (shape, scheme, seed). Truncated normal samples are redrawn
// until they fall within +-2 sigma.
template <class T>
Tensor<T> init_params(const Shape& shape, InitScheme scheme, std::uint64_t seed, double stddev = kInitStd);

std::uint64_t mix_seed(std::uint64_t seed, const std::string& name);

template <class T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

// Creates and registers parameters. Each parameter's initial value depends
// only on the base seed and its full name.
template <class T>
class ParamBuilder {
 public:
  explicit ParamBuilder(std::uint64_t seed) : seed_(seed) {}

  Var<T> make(const std::string& name, const Shape& shape, InitScheme scheme);
  ParamList<T>& params() { return params_; }
  ParamList<T> release() { return std::move(params_); }

 private:
  std::uint64_t seed_;
  ParamList<T> params_;
};

template <class T>
struct LayerNorm {
  Var<T> gamma;
  Var<T> beta;

  LayerNorm() = default;
  LayerNorm(ParamBuilder<T>& pb, const std::string& name, std::size_t channels);
  Var<T> forward(const Var<T>& x) const { return layernorm(x, gamma, beta); }
};

template <class T>
struct Linear {
  std::size_t in = 0;
  std::size_t out = 0;
  Var<T> weight;  // in x out
  Var<T> bias;    // out, may be undefined

  Linear() = default;
  Linear(ParamBuilder<T>& pb, const std::string& name, std::size_t in, std::size_t out,
         bool with_bias = true);
  // x: N x in
  Var<T> forward(const Var<T>& x) const;
};

template <class T>
struct Conv2d {
  Var<T> weight;  // kh x kw x Cin/groups x Cout
  Var<T> bias;
  kernels::Conv2dSpec spec;

  Conv2d() = default;
  Conv2d(ParamBuilder<T>& pb, const std::string& name, std::size_t cin, std::size_t cout,
         std::size_t kernel, const kernels::Conv2dSpec& spec, bool with_bias = true);
  Var<T> forward(const Var<T>& x) const { return conv2d(x, weight, bias, spec); }
};

template <class T>
struct AttentionOutput {
  Var<T> out;           // Nq x C
  Tensor<T> attention;  // Nq x Nk, softmax weights averaged over heads
};

// Multi-head attention with separate Q/K/V/output projections. Self-attention
// passes the same tensor as query and key/value source.
template <class T>
struct MultiHeadAttention {
  std::size_t heads = 1;
  std::size_t dim = 0;
  Linear<T> q_proj, k_proj, v_proj, out_proj;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamBuilder<T>& pb, const std::string& name, std::size_t dim, std::size_t heads);

  std::size_t head_dim() const { return dim / heads; }
  AttentionOutput<T> forward(const Var<T>& q_src, const Var<T>& kv_src) const;
};

template <class T>
AttentionOutput<T> mhsa(const MultiHeadAttention<T>& attn, const Var<T>& q_src, const Var<T>& kv_src) {
  return attn.forward(q_src, kv_src);
}

}  // namespace dtvit
