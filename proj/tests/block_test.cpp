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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dualtoken/block.hpp"
#include "dualtoken/gradcheck.hpp"
#include "dualtoken/kernels.hpp"
#include "oracles.hpp"

namespace dtvit {
namespace {

using T64 = Tensor<double>;

template <class T>
void scramble(ParamList<T>& params, std::uint64_t seed, double stddev = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, stddev);
  for (auto& p : params)
    for (auto& v : p.var.value().data()) v = static_cast<T>(nd(rng));
}

template <class T>
void set(const Var<T>& v, double value) {
  auto d = const_cast<Var<T>&>(v).value().data();
  std::fill(d.begin(), d.end(), static_cast<T>(value));
}

// Reference pieces built from the oracles, row by row.
T64 ln_ref(const T64& x, const T64& g, const T64& b) {
  const std::size_t c = x.shape().back(), n = x.size() / c;
  T64 y(x.shape());
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0, var = 0;
    for (std::size_t i = 0; i < c; ++i) mu += x[r * c + i] / c;
    for (std::size_t i = 0; i < c; ++i) var += (x[r * c + i] - mu) * (x[r * c + i] - mu) / c;
    for (std::size_t i = 0; i < c; ++i) y[r * c + i] = (x[r * c + i] - mu) / std::sqrt(var + 1e-6) * g[i] + b[i];
  }
  return y;
}

T64 gelu_ref(T64 x) {
  for (auto& v : x.data()) v = 0.5 * v * (1 + std::erf(v / std::sqrt(2.0)));
  return x;
}

T64 linear_ref(const T64& x, const Linear<double>& l) {
  auto y = oracle::matmul(x, l.weight.value());
  if (l.bias.defined())
    for (std::size_t r = 0; r < y.dim(0); ++r)
      for (std::size_t c = 0; c < y.dim(1); ++c) y.at(r, c) += l.bias.value()[c];
  return y;
}

T64 conv_ref(const T64& x, const Conv2d<double>& c) {
  return oracle::conv2d(x, c.weight.value(), c.bias.defined() ? &c.bias.value() : nullptr, c.spec.stride,
                        c.spec.padding, c.spec.groups);
}

T64 add_ref(T64 a, const T64& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

T64 attn_ref(const MultiHeadAttention<double>& attn, const T64& q, const T64& kv, T64* weights = nullptr) {
  T64 out, w;
  oracle::mhsa(attn, q, kv, out, w);
  if (weights) *weights = w;
  return out;
}

BlockConfig small_cfg() {
  BlockConfig c;
  c.channels = 8;
  c.heads = 2;
  c.dw_kernel = 3;
  c.ds_steps = 1;
  c.token_grid = 2;
  c.ffn_ratio = 2;
  c.mlp_ratio = 2;
  return c;
}

TEST(ConvEncoder, ZeroPw2IsResidualIdentity) {
  ParamBuilder<double> pb(1);
  ConvEncoderParams<double> p(pb, "enc", 8, 5);
  scramble(pb.params(), 1);
  set(p.pw2.weight, 0.0);
  set(p.pw2.bias, 0.0);
  std::mt19937_64 rng(2);
  const auto x = oracle::random<double>({6, 6, 8}, rng);
  EXPECT_EQ(conv_encoder(Var<double>(x), p).value(), x);
}

TEST(ConvEncoder, StageOneShape) {
  ParamBuilder<float> pb(1);
  ConvEncoderParams<float> p(pb, "enc", 48, 5);
  const auto y = conv_encoder(Var<float>(Tensor<float>({28, 28, 48}, 0.1f)), p);
  EXPECT_EQ(y.shape(), (Shape{28, 28, 48}));
  EXPECT_EQ(p.pw1.weight.shape(), (Shape{1, 1, 48, 192}));
}

TEST(ConvEncoder, CompositionOracle) {
  ParamBuilder<double> pb(3);
  ConvEncoderParams<double> p(pb, "enc", 4, 3);
  scramble(pb.params(), 3);
  std::mt19937_64 rng(4);
  const auto x = oracle::random<double>({6, 5, 4}, rng);
  const auto h = ln_ref(conv_ref(x, p.dw), p.norm.gamma.value(), p.norm.beta.value());
  const auto want = add_ref(x, conv_ref(gelu_ref(conv_ref(h, p.pw1)), p.pw2));
  EXPECT_LE(oracle::max_abs_diff(conv_encoder(Var<double>(x), p).value(), want), 1e-12);
}

TEST(WindowMsa, SingleWindowIsPlainMsaPlusResidual) {
  ParamBuilder<double> pb(5);
  MultiHeadAttention<double> attn(pb, "w", 8, 2);
  scramble(pb.params(), 5);
  std::mt19937_64 rng(6);
  const auto x = oracle::random<double>({7, 7, 8}, rng);
  const auto tok = x.reshaped({49, 8});
  const auto want = add_ref(x, attn_ref(attn, tok, tok).reshaped({7, 7, 8}));
  EXPECT_LE(oracle::max_abs_diff(window_msa_local(Var<double>(x), attn, 7).value(), want), 1e-12);
}

TEST(WindowMsa, IdenticalWindowsGiveIdenticalOutputs) {
  ParamBuilder<double> pb(7);
  MultiHeadAttention<double> attn(pb, "w", 8, 2);
  scramble(pb.params(), 7);
  std::mt19937_64 rng(8);
  const auto half = oracle::random<double>({7, 7, 8}, rng);
  T64 x({14, 7, 8});
  for (std::size_t i = 0; i < 14; ++i)
    for (std::size_t j = 0; j < 7; ++j)
      for (std::size_t c = 0; c < 8; ++c) x.at(i, j, c) = half.at(i % 7, j, c);
  const auto y = window_msa_local(Var<double>(x), attn, 7).value();
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 7; ++j)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(y.at(i, j, c), y.at(i + 7, j, c));
}

TEST(WindowMsa, FourWindowsMatchPerWindowOracle) {
  ParamBuilder<double> pb(9);
  MultiHeadAttention<double> attn(pb, "w", 8, 4);
  scramble(pb.params(), 9);
  std::mt19937_64 rng(10);
  const auto x = oracle::random<double>({14, 14, 8}, rng);
  T64 want = x;
  for (std::size_t wy = 0; wy < 2; ++wy)
    for (std::size_t wx = 0; wx < 2; ++wx) {
      T64 win({49, 8});
      for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j)
          for (std::size_t c = 0; c < 8; ++c) win.at(i * 7 + j, c) = x.at(wy * 7 + i, wx * 7 + j, c);
      const auto o = attn_ref(attn, win, win);
      for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j)
          for (std::size_t c = 0; c < 8; ++c) want.at(wy * 7 + i, wx * 7 + j, c) += o.at(i * 7 + j, c);
    }
  EXPECT_LE(oracle::max_abs_diff(window_msa_local(Var<double>(x), attn, 7).value(), want), 1e-12);
}

TEST(WindowMsa, IndivisibleInputRejected) {
  ParamBuilder<double> pb(1);
  MultiHeadAttention<double> attn(pb, "w", 8, 2);
  EXPECT_THROW(window_msa_local(Var<double>(T64({10, 7, 8})), attn, 7), Error);
}

BlockConfig ds_cfg(std::size_t steps, bool skip = false) {
  BlockConfig c;
  c.channels = 8;
  c.token_grid = 7;
  c.ds_steps = steps;
  c.skip_downsample = skip;
  return c;
}

TEST(Downsample, TwentyEightWithOneStepGivesSeven) {
  const auto cfg = ds_cfg(1);
  ParamBuilder<double> pb(11);
  DownsampleParams<double> p(pb, "ds", 8, 1);
  scramble(pb.params(), 11);
  std::mt19937_64 rng(12);
  const auto x = oracle::random<double>({28, 28, 8}, rng);
  bool interp = true;
  const auto y = stepwise_downsample(Var<double>(x), p, cfg, &interp).value();
  EXPECT_FALSE(interp);
  const auto want = oracle::avgpool(conv_ref(oracle::avgpool(x, 2), p.convs[0]), 2);
  EXPECT_EQ(y.shape(), (Shape{7, 7, 8}));
  EXPECT_LE(oracle::max_abs_diff(y, want), 1e-12);
}

TEST(Downsample, FourteenWithZeroStepsIsPooling) {
  const auto cfg = ds_cfg(0);
  DownsampleParams<double> p;
  std::mt19937_64 rng(13);
  const auto x = oracle::random<double>({14, 14, 8}, rng);
  bool interp = true;
  const auto y = stepwise_downsample(Var<double>(x), p, cfg, &interp).value();
  EXPECT_FALSE(interp);
  EXPECT_EQ(y, oracle::avgpool(x, 2));
}

TEST(Downsample, SkipIsIdentity) {
  const auto cfg = ds_cfg(0, true);
  std::mt19937_64 rng(14);
  const auto x = oracle::random<double>({7, 7, 8}, rng);
  bool interp = true;
  EXPECT_EQ(stepwise_downsample(Var<double>(x), DownsampleParams<double>{}, cfg, &interp).value(), x);
  EXPECT_FALSE(interp);
}

TEST(Downsample, OffGridFallbackKeepsConstants) {
  // 256 input: stage 2 is 16x16 -> 8x8 after pooling, stage 3 is 8x8 skipped
  bool interp = false;
  const auto a = stepwise_downsample(Var<double>(T64({16, 16, 8}, 0.3)), DownsampleParams<double>{}, ds_cfg(0),
                                     &interp).value();
  EXPECT_TRUE(interp);
  EXPECT_EQ(a.shape(), (Shape{7, 7, 8}));
  for (double v : a.data()) EXPECT_EQ(v, 0.3);
  interp = false;
  const auto b = stepwise_downsample(Var<float>(Tensor<float>({8, 8, 8}, -1.7f)), DownsampleParams<float>{},
                                     ds_cfg(0, true), &interp).value();
  EXPECT_TRUE(interp);
  for (float v : b.data()) EXPECT_EQ(v, -1.7f);
}

TEST(Downsample, StageOneAtTwoFiftySixInterpolates) {
  ParamBuilder<float> pb(15);
  DownsampleParams<float> p(pb, "ds", 8, 1);
  bool interp = false;
  const auto y = stepwise_downsample(Var<float>(Tensor<float>({32, 32, 8}, 1.0f)), p, ds_cfg(1), &interp);
  EXPECT_TRUE(interp);
  EXPECT_EQ(y.shape(), (Shape{7, 7, 8}));
}

TEST(Downsample, OneStepPoolsDirectly) {
  auto cfg = ds_cfg(0);
  cfg.ds_kind = DownsampleKind::kOneStep;
  std::mt19937_64 rng(16);
  const auto x = oracle::random<double>({28, 28, 8}, rng);
  bool interp = true;
  EXPECT_EQ(stepwise_downsample(Var<double>(x), DownsampleParams<double>{}, cfg, &interp).value(),
            oracle::avgpool(x, 4));
  EXPECT_FALSE(interp);
}

TEST(Downsample, TableOneScheduleIsExactAt224) {
  const auto mc = preset("dualtoken_s");
  const std::size_t sides[3] = {28, 14, 7};
  for (std::size_t s = 0; s < 3; ++s) {
    const auto cfg = block_config(mc, s);
    ParamBuilder<float> pb(17);
    DownsampleParams<float> p;
    if (!cfg.skip_downsample) p = DownsampleParams<float>(pb, "ds", cfg.channels, cfg.ds_steps);
    bool interp = true;
    const auto y = stepwise_downsample(Var<float>(Tensor<float>({sides[s], sides[s], cfg.channels}, 0.5f)), p,
                                       cfg, &interp);
    EXPECT_FALSE(interp) << "stage " << s;
    EXPECT_EQ(y.shape(), (Shape{7, 7, cfg.channels}));
  }
  EXPECT_EQ(block_config(mc, 0).ds_steps, 1u);
  EXPECT_EQ(block_config(mc, 1).ds_steps, 0u);
  EXPECT_TRUE(block_config(mc, 2).skip_downsample);
}

TEST(Aggregate, IdenticalTokensStayIdentical) {
  ParamBuilder<double> pb(18);
  MultiHeadAttention<double> attn(pb, "a", 8, 2);
  scramble(pb.params(), 18);
  T64 x({3, 3, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * double(i % 8) - 0.3;
  const auto y = global_aggregate(Var<double>(x), attn).out.value();
  for (std::size_t r = 1; r < 9; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.at(r, c), y.at(0, c), 1e-14);
}

TEST(Aggregate, SingleTokenIsValueProjection) {
  ParamBuilder<double> pb(19);
  MultiHeadAttention<double> attn(pb, "a", 8, 2);
  scramble(pb.params(), 19);
  std::mt19937_64 rng(20);
  const auto x = oracle::random<double>({1, 1, 8}, rng);
  const auto y = global_aggregate(Var<double>(x), attn).out.value();
  const auto want = linear_ref(linear_ref(x.reshaped({1, 8}), attn.v_proj), attn.out_proj);
  EXPECT_LE(oracle::max_abs_diff(y, want), 1e-14);
}

TEST(Aggregate, SevenBySevenOracle) {
  ParamBuilder<double> pb(21);
  MultiHeadAttention<double> attn(pb, "a", 8, 2);
  scramble(pb.params(), 21);
  std::mt19937_64 rng(22);
  const auto x = oracle::random<double>({7, 7, 8}, rng);
  const auto tok = x.reshaped({49, 8});
  EXPECT_LE(oracle::max_abs_diff(global_aggregate(Var<double>(x), attn).out.value(), attn_ref(attn, tok, tok)),
            1e-12);
}

TEST(TokenMlp, ZeroWeightsGiveZero) {
  ParamBuilder<double> pb(23);
  TokenMlpParams<double> p(pb, "m", MlpKind::kNormal, 8, 4, 2);
  scramble(pb.params(), 23);
  for (const auto* v : {&p.fc1.weight, &p.fc1.bias, &p.fc2.weight, &p.fc2.bias}) set(*v, 0.0);
  std::mt19937_64 rng(24);
  const auto y = token_mlp(Var<double>(oracle::random<double>({4, 8}, rng)), p).value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(p.fc1.out, 16u);
}

TEST(TokenMlp, MixIdentityLinearsLeaveNormalizedInput) {
  ParamBuilder<double> pb(25);
  TokenMlpParams<double> p(pb, "m", MlpKind::kMix, 8, 4, 2);
  scramble(pb.params(), 25);
  auto eye = [](const Linear<double>& l) {
    auto& w = const_cast<Linear<double>&>(l).weight.value();
    std::fill(w.data().begin(), w.data().end(), 0.0);
    for (std::size_t i = 0; i < l.in; ++i) w.at(i, i) = 1.0;
    set(l.bias, 0.0);
  };
  eye(p.fc1);
  eye(p.fc2);
  std::mt19937_64 rng(26);
  const auto g = oracle::random<double>({4, 8}, rng);
  // the token branch is pre-normalized, so identity mixing returns LN(g)
  const auto want = p.norm.forward(Var<double>(g)).value();
  EXPECT_EQ(token_mlp(Var<double>(g), p).value(), want);
  EXPECT_EQ(p.fc2.in, 4u);
  EXPECT_EQ(p.fc2.out, 4u);
}

TEST(TokenMlp, CompositionOracles) {
  std::mt19937_64 rng(27);
  const auto g = oracle::random<double>({4, 8}, rng);
  {
    ParamBuilder<double> pb(28);
    TokenMlpParams<double> p(pb, "m", MlpKind::kNormal, 8, 4, 2);
    scramble(pb.params(), 28);
    const auto h = ln_ref(g, p.norm.gamma.value(), p.norm.beta.value());
    const auto want = linear_ref(gelu_ref(linear_ref(h, p.fc1)), p.fc2);
    EXPECT_LE(oracle::max_abs_diff(token_mlp(Var<double>(g), p).value(), want), 1e-12);
  }
  {
    ParamBuilder<double> pb(29);
    TokenMlpParams<double> p(pb, "m", MlpKind::kMix, 8, 4, 2);
    scramble(pb.params(), 29);
    const auto h = ln_ref(g, p.norm.gamma.value(), p.norm.beta.value());
    const auto want = kernels::transpose(linear_ref(kernels::transpose(linear_ref(h, p.fc1)), p.fc2));
    EXPECT_LE(oracle::max_abs_diff(token_mlp(Var<double>(g), p).value(), want), 1e-12);
  }
}

TEST(TokenMlp, MixRejectsWrongTokenCount) {
  ParamBuilder<double> pb(1);
  TokenMlpParams<double> p(pb, "m", MlpKind::kMix, 8, 4, 2);
  EXPECT_THROW(token_mlp(Var<double>(T64({9, 8}, 1.0)), p), Error);
}

struct FuseFixture {
  TokenMlpParams<double> mlp;
  GlobalTokens<double> g;
  T64 x_ga, m;
  FuseFixture() {
    ParamBuilder<double> pb(30);
    mlp = TokenMlpParams<double>(pb, "m", MlpKind::kNormal, 8, 4, 2);
    scramble(pb.params(), 30);
    std::mt19937_64 rng(31);
    g = GlobalTokens<double>{Var<double>(oracle::random<double>({4, 8}, rng)), 2, 2};
    x_ga = oracle::random<double>({4, 8}, rng);
    m = token_mlp(g.tokens, mlp).value();
  }
};

TEST(Fuse, AlphaZeroIsAggregate) {
  FuseFixture f;
  EXPECT_EQ(fuse_global_tokens(f.g, Var<double>(f.x_ga), 0.0, f.mlp).value(), f.x_ga);
}

TEST(Fuse, AlphaOneIsMlp) {
  FuseFixture f;
  EXPECT_EQ(fuse_global_tokens(f.g, Var<double>(f.x_ga), 1.0, f.mlp).value(), f.m);
}

TEST(Fuse, DefaultAlphaWeightedSum) {
  FuseFixture f;
  const auto y = fuse_global_tokens(f.g, Var<double>(f.x_ga), 0.1, f.mlp).value();
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], 0.1 * f.m[i] + 0.9 * f.x_ga[i], 1e-15);
}

TEST(Fuse, LinearInAggregate) {
  FuseFixture f;
  std::mt19937_64 rng(32);
  const auto y = oracle::random<double>({4, 8}, rng);
  const double a = 0.7, b = -1.3;
  T64 mix({4, 8}), zero({4, 8});
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * f.x_ga[i] + b * y[i];
  auto run = [&](const T64& x) { return fuse_global_tokens(f.g, Var<double>(x), 0.1, f.mlp).value(); };
  const auto f0 = run(zero), fx = run(f.x_ga), fy = run(y), fm = run(mix);
  for (std::size_t i = 0; i < fm.size(); ++i)
    EXPECT_NEAR(fm[i] - f0[i], a * (fx[i] - f0[i]) + b * (fy[i] - f0[i]), 1e-12);
}

TEST(Fuse, ShapeMismatchRejected) {
  FuseFixture f;
  EXPECT_THROW(fuse_global_tokens(f.g, Var<double>(T64({9, 8})), 0.1, f.mlp), Error);
}

TEST(Fuse, MsaVariantQueriesFromTokens) {
  ParamBuilder<double> pb(33);
  MultiHeadAttention<double> attn(pb, "f", 8, 2);
  scramble(pb.params(), 33);
  std::mt19937_64 rng(34);
  const auto g = oracle::random<double>({8, 8}, rng);
  const auto img = oracle::random<double>({16, 8}, rng);
  T64 kv({24, 8});
  std::copy(g.data().begin(), g.data().end(), kv.data().begin());
  std::copy(img.data().begin(), img.data().end(), kv.data().begin() + 64);
  const auto got = fuse_global_tokens_msa(GlobalTokens<double>{Var<double>(g), 1, 8}, Var<double>(img), attn);
  EXPECT_LE(oracle::max_abs_diff(got.value(), attn_ref(attn, g, kv)), 1e-12);
}

TEST(Broadcast, IdenticalTokensGiveSameVector) {
  ParamBuilder<double> pb(35);
  MultiHeadAttention<double> attn(pb, "b", 8, 2);
  scramble(pb.params(), 35);
  std::mt19937_64 rng(36);
  const auto img = oracle::random<double>({12, 8}, rng);
  const auto row = oracle::random<double>({1, 8}, rng);
  T64 g({4, 8});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 8; ++c) g.at(r, c) = row.at(0, c);
  const auto y = global_broadcast(Var<double>(img), Var<double>(g), attn).out.value();
  for (std::size_t r = 1; r < 12; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.at(r, c), y.at(0, c), 1e-13);
}

TEST(Broadcast, CrossAttentionOracleAndRowSums) {
  ParamBuilder<double> pb(37);
  MultiHeadAttention<double> attn(pb, "b", 8, 4);
  scramble(pb.params(), 37);
  std::mt19937_64 rng(38);
  const auto img = oracle::random<double>({20, 8}, rng);
  const auto g = oracle::random<double>({9, 8}, rng);
  const auto got = global_broadcast(Var<double>(img), Var<double>(g), attn);
  T64 w;
  const auto want = attn_ref(attn, img, g, &w);
  EXPECT_LE(oracle::max_abs_diff(got.out.value(), want), 1e-12);
  EXPECT_LE(oracle::max_abs_diff(got.attention, w), 1e-12);
  ASSERT_EQ(got.attention.shape(), (Shape{20, 9}));
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 9; ++c) s += got.attention.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Fusion, ZeroOperandsAndCommutativity) {
  std::mt19937_64 rng(39);
  const auto a = oracle::random<double>({4, 4, 3}, rng);
  const auto b = oracle::random<double>({4, 4, 3}, rng);
  const T64 z({4, 4, 3});
  EXPECT_EQ(dual_token_fusion(Var<double>(a), Var<double>(z)).value(), a);
  EXPECT_EQ(dual_token_fusion(Var<double>(z), Var<double>(b)).value(), b);
  EXPECT_EQ(dual_token_fusion(Var<double>(a), Var<double>(b)).value(),
            dual_token_fusion(Var<double>(b), Var<double>(a)).value());
}

TEST(Ffn, ZeroSecondLinearIsIdentity) {
  ParamBuilder<double> pb(40);
  FfnParams<double> p(pb, "ffn", 8, 4);
  scramble(pb.params(), 40);
  set(p.fc2.weight, 0.0);
  set(p.fc2.bias, 0.0);
  std::mt19937_64 rng(41);
  const auto x = oracle::random<double>({5, 8}, rng);
  EXPECT_EQ(ffn(Var<double>(x), p).value(), x);
  EXPECT_EQ(p.fc1.out, 32u);
}

TEST(Ffn, CompositionOracle) {
  ParamBuilder<double> pb(42);
  FfnParams<double> p(pb, "ffn", 8, 2);
  scramble(pb.params(), 42);
  std::mt19937_64 rng(43);
  const auto x = oracle::random<double>({6, 8}, rng);
  const auto h = ln_ref(x, p.norm.gamma.value(), p.norm.beta.value());
  const auto want = add_ref(x, linear_ref(gelu_ref(linear_ref(h, p.fc1)), p.fc2));
  const auto y = ffn(Var<double>(x), p).value();
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_LE(oracle::max_abs_diff(y, want), 1e-12);
}

TEST(BiDim, SaturatedGatesLeaveInput) {
  ParamBuilder<double> pb(44);
  BiDimParams<double> p(pb, "bd", 8);
  scramble(pb.params(), 44, 0.01);
  set(p.spatial.bias, -60.0);
  set(p.channel.bias, -60.0);
  std::mt19937_64 rng(45);
  const auto x = oracle::random<double>({6, 8}, rng);
  const auto y = bidim_attn(Var<double>(x), p).value();
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_LE(oracle::max_abs_diff(y, x), 1e-20);
}

TEST(BiDim, FormulaOracle) {
  ParamBuilder<double> pb(46);
  BiDimParams<double> p(pb, "bd", 8);
  scramble(pb.params(), 46);
  std::mt19937_64 rng(47);
  const auto x = oracle::random<double>({6, 8}, rng);
  const auto s = linear_ref(x, p.spatial);
  T64 mean({1, 8});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 8; ++c) mean.at(0, c) += x.at(r, c) / 6;
  const auto cg = linear_ref(mean, p.channel);
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  const auto y = bidim_attn(Var<double>(x), p).value();
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 8; ++c)
      EXPECT_NEAR(y.at(r, c), x.at(r, c) * (1 + sig(s.at(r, 0)) * sig(cg.at(0, c))), 1e-12);
}

TEST(Block, StageOneShapeContract) {
  const auto cfg = block_config(preset("dualtoken_t"), 0);
  ParamBuilder<float> pb(48);
  BlockParams<float> p(pb, "b", cfg);
  const GlobalTokens<float> g{Var<float>(init_params<float>({49, 48}, InitScheme::kTruncNormal, 1)), 7, 7};
  const auto out = dual_token_block(Var<float>(init_params<float>({28, 28, 48}, InitScheme::kTruncNormal, 2)),
                                    g, p);
  EXPECT_EQ(out.x.shape(), (Shape{28, 28, 48}));
  EXPECT_EQ(out.g.tokens.shape(), (Shape{49, 48}));
  EXPECT_EQ(out.g.grid().shape(), (Shape{7, 7, 48}));
  EXPECT_EQ(out.acts.x_ds.shape(), (Shape{7, 7, 48}));
  EXPECT_FALSE(out.acts.interpolated);
  ASSERT_EQ(out.acts.broadcast_attention.shape(), (Shape{784, 49}));
  for (std::size_t r = 0; r < 784; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 49; ++c) s += out.acts.broadcast_attention.at(r, c);
    ASSERT_NEAR(s, 1.0, 1e-6);
  }
}

struct BlockFixture {
  BlockConfig cfg;
  BlockParams<double> p;
  T64 x;
  GlobalTokens<double> g;
  explicit BlockFixture(BlockConfig c, std::uint64_t seed = 50) : cfg(c) {
    ParamBuilder<double> pb(seed);
    p = BlockParams<double>(pb, "b", cfg);
    scramble(pb.params(), seed);
    std::mt19937_64 rng(seed + 1);
    x = oracle::random<double>({8, 8, cfg.channels}, rng);
    const std::size_t n = cfg.global_token_count();
    const std::size_t rows = cfg.grid_tokens() ? cfg.token_grid : 1;
    g = GlobalTokens<double>{Var<double>(oracle::random<double>({n, cfg.channels}, rng)), rows, n / rows};
  }
  BlockOutput<double> run() const { return dual_token_block(Var<double>(x), g, p); }
};

TEST(Block, DecouplesWhenGlobalPathSilenced) {
  auto cfg = small_cfg();
  cfg.alpha = 0.0;
  BlockFixture f(cfg);
  set(f.p.attn.out_proj.weight, 0.0);
  set(f.p.attn.out_proj.bias, 0.0);
  const auto out = f.run();
  for (double v : out.acts.x_global.value().data()) EXPECT_EQ(v, 0.0);
  const auto tok = reshape(out.acts.x_local, {64, cfg.channels});
  const auto want = bidim_attn(ffn(tok, f.p.ffn), f.p.bidim).value();
  EXPECT_EQ(out.x.value(), want.reshaped({8, 8, cfg.channels}));
}

TEST(Block, GlobalResidualWhenFusionIsZero) {
  auto cfg = small_cfg();
  cfg.alpha = 0.0;
  BlockFixture f(cfg);
  set(f.p.attn.out_proj.weight, 0.0);
  set(f.p.attn.out_proj.bias, 0.0);
  EXPECT_EQ(f.run().g.tokens.value(), f.g.tokens.value());

  auto msa = small_cfg();
  msa.global_mode = GlobalMode::kNormalMsa;
  BlockFixture h(msa);
  set(h.p.fuse_attn.out_proj.weight, 0.0);
  set(h.p.fuse_attn.out_proj.bias, 0.0);
  EXPECT_EQ(h.run().g.tokens.value(), h.g.tokens.value());
}

TEST(Block, ActivationsComposeAsDocumented) {
  BlockFixture f(small_cfg());
  const auto out = f.run();
  const auto& a = out.acts;
  EXPECT_EQ(a.x_local.value(), conv_encoder(Var<double>(f.x), f.p.encoder).value());
  EXPECT_EQ(a.x_ds.value(), stepwise_downsample(a.x_local, f.p.downsample, f.cfg).value());
  EXPECT_EQ(a.x_ga.value(), global_aggregate(a.x_ds, f.p.attn).out.value());
  EXPECT_EQ(a.g_new.value(), fuse_global_tokens(f.g, a.x_ga, f.cfg.alpha, f.p.token_mlp).value());
  const auto tok = reshape(a.x_local, {64, f.cfg.channels});
  EXPECT_EQ(a.x_global.value().vec(), global_broadcast(tok, a.g_new, f.p.attn).out.value().vec());
  EXPECT_EQ(a.x_new.value(), add_ref(a.x_local.value(), a.x_global.value()));
  const auto g_out = add_ref(f.g.tokens.value(), a.g_new.value());
  EXPECT_EQ(out.g.tokens.value(), g_out);
}

TEST(Block, ShapePreservedAcrossModes) {
  for (int variant = 0; variant < 6; ++variant) {
    auto cfg = small_cfg();
    if (variant == 1) cfg.mlp_kind = MlpKind::kMix;
    if (variant == 2) cfg.global_mode = GlobalMode::kNormalMsa;
    if (variant == 3) cfg.global_mode = GlobalMode::kPositionAwareMsa;
    if (variant == 4) cfg.ds_kind = DownsampleKind::kOneStep;
    if (variant == 5) {
      cfg.local_kind = LocalKind::kWindowMsa;
      cfg.window_size = 4;
      cfg.bidim_enabled = false;
    }
    BlockFixture f(cfg, 60 + variant);
    const auto out = f.run();
    EXPECT_EQ(out.x.shape(), f.x.shape()) << variant;
    EXPECT_EQ(out.g.tokens.shape(), f.g.tokens.shape()) << variant;
  }
}

TEST(Block, ErrorsNameTheFailingStep) {
  BlockFixture f(small_cfg());
  try {
    dual_token_block(Var<double>(T64({6, 6, 8}, 1.0)), f.g, f.p);
    FAIL() << "6x6 cannot pool twice";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("dual_token_block[downsample]"), std::string::npos) << e.what();
  }
  GlobalTokens<double> wrong{Var<double>(T64({9, 8})), 3, 3};
  EXPECT_THROW(dual_token_block(Var<double>(f.x), wrong, f.p), Error);
}

TEST(Block, FullBlockGradcheckTiny) {
  auto cfg = small_cfg();
  cfg.channels = 4;
  cfg.heads = 2;
  ParamBuilder<double> pb(70);
  BlockParams<double> p(pb, "b", cfg);
  scramble(pb.params(), 70);
  std::mt19937_64 rng(71);
  auto x = Var<double>::parameter(oracle::random<double>({8, 8, 4}, rng));
  auto gt = Var<double>::parameter(oracle::random<double>({4, 4}, rng));
  const auto rx = Var<double>(oracle::random<double>({8, 8, 4}, rng));
  const auto rg = Var<double>(oracle::random<double>({4, 4}, rng));
  std::vector<Var<double>> leaves{x, gt};
  for (const auto& np : pb.params()) leaves.push_back(np.var);
  const auto r = grad_check(
      [&] {
        const auto out = dual_token_block(x, GlobalTokens<double>{gt, 2, 2}, p);
        return add(sum(mul(out.x, rx)), sum(mul(out.g.tokens, rg)));
      },
      leaves);
  EXPECT_TRUE(r.pass) << r.worst;
  EXPECT_LE(r.max_rel_err, 1e-4);
}

}  // namespace
}  // namespace dtvit
