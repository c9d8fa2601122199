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

// The Dual Token Block: a convolutional local branch fused with a global
// branch that downsamples, self-attends, mixes with the position-aware global
// tokens and broadcasts back to the image tokens.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dualtoken/config.hpp"
#include "dualtoken/layers.hpp"

namespace dtvit {

// Global tokens as a token matrix (rows*cols x C). Position-aware tokens keep a
// g x g arrangement; the normal (1-D) variant uses rows = 1.
template <class T>
struct GlobalTokens {
  Var<T> tokens;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t count() const { return rows * cols; }
  std::size_t channels() const { return tokens.dim(1); }
  // rows x cols x C view.
  Tensor<T> grid() const { return tokens.value().reshaped({rows, cols, channels()}); }
};

template <class T>
struct ConvEncoderParams {
  Conv2d<T> dw;
  LayerNorm<T> norm;
  Conv2d<T> pw1;  // C -> 4C
  Conv2d<T> pw2;  // 4C -> C

  ConvEncoderParams() = default;
  ConvEncoderParams(ParamBuilder<T>& pb, const std::string& name, std::size_t channels, std::size_t kernel);
};

template <class T>
struct DownsampleParams {
  std::vector<Conv2d<T>> convs;  // one 3x3 conv per step

  DownsampleParams() = default;
  DownsampleParams(ParamBuilder<T>& pb, const std::string& name, std::size_t channels, std::size_t steps);
};

template <class T>
struct TokenMlpParams {
  MlpKind kind = MlpKind::kNormal;
  LayerNorm<T> norm;
  Linear<T> fc1;  // normal: C -> rC; mix: channel mixing C -> C
  Linear<T> fc2;  // normal: rC -> C; mix: token mixing n -> n

  TokenMlpParams() = default;
  TokenMlpParams(ParamBuilder<T>& pb, const std::string& name, MlpKind kind, std::size_t channels,
                 std::size_t tokens, std::size_t ratio);
};

template <class T>
struct FfnParams {
  LayerNorm<T> norm;
  Linear<T> fc1;
  Linear<T> fc2;

  FfnParams() = default;
  FfnParams(ParamBuilder<T>& pb, const std::string& name, std::size_t channels, std::size_t ratio);
};

template <class T>
struct BiDimParams {
  Linear<T> spatial;  // C -> 1
  Linear<T> channel;  // C -> C

  BiDimParams() = default;
  BiDimParams(ParamBuilder<T>& pb, const std::string& name, std::size_t channels);
};

template <class T>
struct BlockParams {
  BlockConfig cfg;
  ConvEncoderParams<T> encoder;          // local_kind == conv_encoder
  MultiHeadAttention<T> window_attn;     // local_kind == window_msa
  DownsampleParams<T> downsample;        // step-wise convs
  MultiHeadAttention<T> attn;            // shared by global aggregation and broadcast
  TokenMlpParams<T> token_mlp;           // position_aware_sum
  MultiHeadAttention<T> fuse_attn;       // normal_msa / position_aware_msa
  FfnParams<T> ffn;
  BiDimParams<T> bidim;                  // bidim_enabled

  BlockParams() = default;
  BlockParams(ParamBuilder<T>& pb, const std::string& name, const BlockConfig& cfg);
};

template <class T>
struct BlockActivations {
  Var<T> x_local;   // H x W x C
  Var<T> x_ds;      // g x g x C (undefined for normal_msa)
  Var<T> x_ga;      // g^2 x C (undefined for normal_msa)
  Var<T> g_new;     // n x C
  Var<T> x_global;  // H x W x C
  Var<T> x_new;     // H x W x C
  Tensor<T> broadcast_attention;  // N x n, head-averaged
  bool interpolated = false;      // x_ds went through the resize fallback
};

template <class T>
struct BlockOutput {
  Var<T> x;
  GlobalTokens<T> g;
  BlockActivations<T> acts;
};

// Eq. 1 style local branch: x + PW2(GELU(PW1(LN(DW(x))))).
template <class T>
Var<T> conv_encoder(const Var<T>& x, const ConvEncoderParams<T>& p);

// x + MSA within non-overlapping window x window tiles.
template <class T>
Var<T> window_msa_local(const Var<T>& x, const MultiHeadAttention<T>& attn, std::size_t window);

// Reduces x_local to a g x g map. Sets *interpolated when the bilinear
// fallback was needed to reach g x g.
template <class T>
Var<T> stepwise_downsample(const Var<T>& x_local, const DownsampleParams<T>& p, const BlockConfig& cfg,
                           bool* interpolated = nullptr);

// Self-attention over the flattened g x g map.
template <class T>
AttentionOutput<T> global_aggregate(const Var<T>& x_ds, const MultiHeadAttention<T>& attn);

template <class T>
Var<T> token_mlp(const Var<T>& g, const TokenMlpParams<T>& p);

// alpha * MLP(G) + (1 - alpha) * X_ga.
template <class T>
Var<T> fuse_global_tokens(const GlobalTokens<T>& g, const Var<T>& x_ga, double alpha,
                          const TokenMlpParams<T>& mlp);

// MSA fusion: queries from G, keys/values from concat(G, source tokens).
template <class T>
Var<T> fuse_global_tokens_msa(const GlobalTokens<T>& g, const Var<T>& source,
                              const MultiHeadAttention<T>& attn);

// Cross-attention with queries from the image tokens and keys/values from G_new.
template <class T>
AttentionOutput<T> global_broadcast(const Var<T>& x_img, const Var<T>& g_new,
                                    const MultiHeadAttention<T>& attn);

template <class T>
Var<T> dual_token_fusion(const Var<T>& x_local, const Var<T>& x_global);

// x + fc2(GELU(fc1(LN(x)))) on N x C tokens.
template <class T>
Var<T> ffn(const Var<T>& x, const FfnParams<T>& p);

// x + x * s * c with spatial gate s = sigmoid(x w_s + b_s) and channel gate
// c = sigmoid(mean_tokens(x) W_c + b_c).
template <class T>
Var<T> bidim_attn(const Var<T>& x, const BiDimParams<T>& p);

template <class T>
BlockOutput<T> dual_token_block(const Var<T>& x, const GlobalTokens<T>& g, const BlockParams<T>& p);

}  // namespace dtvit
