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
#include <set>

#include "dualtoken/kernels.hpp"
#include "dualtoken/layers.hpp"
#include "oracles.hpp"

namespace dtvit {
namespace {

template <class T>
void scramble(ParamList<T>& params, std::uint64_t seed, double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, stddev);
  for (auto& p : params)
    for (auto& v : p.var.value().data()) v = static_cast<T>(nd(rng));
}

TEST(Linear, ParameterCount) {
  ParamBuilder<float> pb(1);
  Linear<float> lin(pb, "fc", 4, 3);
  std::size_t n = 0;
  for (const auto& p : pb.params()) n += p.var.size();
  EXPECT_EQ(n, 15u);
}

TEST(Linear, IdentityWeightKeepsInput) {
  ParamBuilder<double> pb(1);
  Linear<double> lin(pb, "fc", 5, 5);
  auto& w = lin.weight.value();
  std::fill(w.data().begin(), w.data().end(), 0.0);
  for (std::size_t i = 0; i < 5; ++i) w.at(i, i) = 1.0;
  std::mt19937_64 rng(2);
  const auto x = oracle::random<double>({4, 5}, rng);
  EXPECT_EQ(lin.forward(Var<double>(x)).value(), x);
}

TEST(Linear, ZeroWeightGivesBiasRows) {
  ParamBuilder<double> pb(1);
  Linear<double> lin(pb, "fc", 3, 4);
  std::fill(lin.weight.value().data().begin(), lin.weight.value().data().end(), 0.0);
  const std::vector<double> b{0.5, -1, 2, 3.25};
  std::copy(b.begin(), b.end(), lin.bias.value().data().begin());
  std::mt19937_64 rng(3);
  const auto y = lin.forward(Var<double>(oracle::random<double>({6, 3}, rng))).value();
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y.at(r, c), b[c]);
}

TEST(Linear, MatchesMatmulOracle) {
  ParamBuilder<float> pb(4);
  Linear<float> lin(pb, "fc", 7, 5);
  scramble(pb.params(), 4, 0.5);
  std::mt19937_64 rng(5);
  const auto x = oracle::random<float>({6, 7}, rng);
  auto want = oracle::matmul(x, lin.weight.value());
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 5; ++c) want.at(r, c) += lin.bias.value()[c];
  EXPECT_LE(oracle::max_abs_diff(lin.forward(Var<float>(x)).value(), want), 1e-6);
}

TEST(Linear, WrongInputWidth) {
  ParamBuilder<float> pb(1);
  Linear<float> lin(pb, "fc", 4, 3);
  EXPECT_THROW(lin.forward(Var<float>(Tensor<float>({2, 5}))), Error);
}

TEST(Mhsa, SingleKeyIgnoresQueries) {
  ParamBuilder<double> pb(6);
  MultiHeadAttention<double> attn(pb, "attn", 8, 2);
  scramble(pb.params(), 6, 0.5);
  std::mt19937_64 rng(7);
  const auto q = oracle::random<double>({5, 8}, rng);
  const auto kv = oracle::random<double>({1, 8}, rng);
  const auto y = mhsa(attn, Var<double>(q), Var<double>(kv)).out.value();
  const auto want = attn.out_proj.forward(attn.v_proj.forward(Var<double>(kv))).value();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(y.at(i, c), want.at(0, c));
}

TEST(Mhsa, IdenticalKeysGiveIdenticalOutputs) {
  ParamBuilder<double> pb(8);
  MultiHeadAttention<double> attn(pb, "attn", 8, 4);
  scramble(pb.params(), 8, 0.5);
  std::mt19937_64 rng(9);
  const auto q = oracle::random<double>({4, 8}, rng);
  const auto row = oracle::random<double>({1, 8}, rng);
  Tensor<double> kv({6, 8});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 8; ++c) kv.at(r, c) = row.at(0, c);
  const auto y = mhsa(attn, Var<double>(q), Var<double>(kv)).out.value();
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.at(i, c), y.at(0, c), 1e-12);
}

TEST(Mhsa, PerQueryOracleF32) {
  ParamBuilder<float> pb(10);
  MultiHeadAttention<float> attn(pb, "attn", 8, 2);
  scramble(pb.params(), 10, 0.4);
  std::mt19937_64 rng(11);
  const auto x = oracle::random<float>({6, 8}, rng);
  const auto got = mhsa(attn, Var<float>(x), Var<float>(x));
  Tensor<float> out, w;
  oracle::mhsa(attn, x, x, out, w);
  EXPECT_LE(oracle::max_abs_diff(got.out.value(), out), 1e-6);
  EXPECT_LE(oracle::max_abs_diff(got.attention, w), 1e-6);
}

TEST(Mhsa, OracleSweep) {
  std::uint64_t seed = 100;
  for (std::size_t heads : {1, 2, 4})
    for (std::size_t c : {4, 8, 16})
      for (std::size_t nq : {1, 3, 8})
        for (std::size_t nk : {1, 5, 8}) {
          ParamBuilder<double> pb(++seed);
          MultiHeadAttention<double> attn(pb, "attn", c, heads);
          scramble(pb.params(), seed, 0.4);
          std::mt19937_64 rng(seed);
          const auto q = oracle::random<double>({nq, c}, rng);
          const auto kv = oracle::random<double>({nk, c}, rng);
          const auto got = mhsa(attn, Var<double>(q), Var<double>(kv));
          Tensor<double> out, w;
          oracle::mhsa(attn, q, kv, out, w);
          ASSERT_LE(oracle::max_abs_diff(got.out.value(), out), 1e-12)
              << "H=" << heads << " C=" << c << " Nq=" << nq << " Nk=" << nk;
          for (std::size_t i = 0; i < nq; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < nk; ++j) s += got.attention.at(i, j);
            ASSERT_NEAR(s, 1.0, 1e-6);
          }
        }
}

TEST(Mhsa, IndivisibleHeadsRejected) {
  ParamBuilder<float> pb(1);
  EXPECT_THROW(MultiHeadAttention<float>(pb, "attn", 6, 4), Error);
}

TEST(Mhsa, ParametersEnumeratedOnce) {
  ParamBuilder<float> pb(1);
  MultiHeadAttention<float> attn(pb, "attn", 8, 2);
  std::set<std::string> names;
  std::set<const void*> nodes;
  std::size_t n = 0;
  for (const auto& p : pb.params()) {
    names.insert(p.name);
    nodes.insert(p.var.node());
    n += p.var.size();
  }
  EXPECT_EQ(pb.params().size(), 8u);
  EXPECT_EQ(names.size(), 8u);
  EXPECT_EQ(nodes.size(), 8u);
  EXPECT_EQ(n, 4u * (8 * 8 + 8));
  for (const auto* lin : {&attn.q_proj, &attn.k_proj, &attn.v_proj, &attn.out_proj}) {
    EXPECT_TRUE(nodes.count(lin->weight.node()));
    EXPECT_TRUE(nodes.count(lin->bias.node()));
  }
}

TEST(Init, ZerosAndOnes) {
  const auto z = init_params<float>({3, 4}, InitScheme::kZeros, 1);
  const auto o = init_params<double>({5}, InitScheme::kOnes, 1);
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
  for (double v : o.data()) EXPECT_EQ(v, 1.0);
}

TEST(Init, SameSeedBitIdentical) {
  const auto a = init_params<float>({16, 16}, InitScheme::kTruncNormal, 77);
  const auto b = init_params<float>({16, 16}, InitScheme::kTruncNormal, 77);
  const auto c = init_params<float>({16, 16}, InitScheme::kTruncNormal, 78);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Init, TruncNormalStatistics) {
  const std::size_t n = 100000;
  const auto t = init_params<double>({n}, InitScheme::kTruncNormal, 2024);
  double mean = 0, maxabs = 0;
  for (double v : t.data()) {
    mean += v / n;
    maxabs = std::max(maxabs, std::abs(v));
  }
  EXPECT_LE(std::abs(mean), 3 * kInitStd / std::sqrt(double(n)));
  EXPECT_LE(maxabs, 2 * kInitStd);
  double var = 0;
  for (double v : t.data()) var += (v - mean) * (v - mean) / n;
  // std of a normal truncated at two sigma is about 0.88 sigma
  EXPECT_NEAR(std::sqrt(var) / kInitStd, 0.8796, 0.01);
}

TEST(Init, BuilderSeedsPerName) {
  ParamBuilder<float> a(5), b(5);
  const auto x = a.make("x", {10}, InitScheme::kTruncNormal).value();
  const auto y = a.make("y", {10}, InitScheme::kTruncNormal).value();
  const auto x2 = b.make("x", {10}, InitScheme::kTruncNormal).value();
  EXPECT_EQ(x, x2);
  EXPECT_NE(x, y);
}

}  // namespace
}  // namespace dtvit
