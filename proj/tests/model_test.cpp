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
#include <cstdio>
#include <fstream>
#include <random>

#include "dualtoken/model.hpp"
#include "dualtoken/suites.hpp"
#include "oracles.hpp"

namespace dtvit {
namespace {

std::string temp_path(const std::string& name) { return ::testing::TempDir() + "dtvit_model_" + name; }

template <class T>
Tensor<T> image(std::size_t side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random<T>({side, side, 3}, rng, 0.5);
}

TEST(Build, SameSeedSameParameters) {
  const auto a = build_model<float>(preset("toy"), 3);
  const auto b = build_model<float>(preset("toy"), 3);
  const auto c = build_model<float>(preset("toy"), 4);
  ASSERT_EQ(a.params.size(), b.params.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_EQ(a.params[i].name, b.params[i].name);
    EXPECT_EQ(a.params[i].var.value(), b.params[i].var.value());
    if (a.params[i].var.value() != c.params[i].var.value()) differs = true;
  }
  EXPECT_TRUE(differs);
}

TEST(Build, HeadsMustDivideChannels) {
  auto cfg = preset("toy");
  cfg.stages[0].heads = 3;
  EXPECT_THROW(build_model<float>(cfg, 1), Error);
}

TEST(Build, ParameterNamesUnique) {
  const auto m = build_model<float>(preset("dualtoken_t_mix"), 1);
  std::set<std::string> names;
  std::size_t n = 0;
  for (const auto& p : m.params) {
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
    n += p.var.size();
  }
  EXPECT_EQ(n, m.param_count());
}

TEST(Stem, StrideEightShapes) {
  const auto s = build_model<float>(preset("dualtoken_s"), 1);
  EXPECT_EQ(stem_forward(s, Var<float>(image<float>(224, 1))).shape(), (Shape{28, 28, 64}));
  EXPECT_EQ(stem_forward(s, Var<float>(image<float>(256, 1))).shape(), (Shape{32, 32, 64}));
  EXPECT_THROW(stem_forward(s, Var<float>(image<float>(60, 1))), Error);
}

TEST(Stem, ConstantImageGivesConstantInterior) {
  auto m = build_model<double>(preset("toy"), 2);
  randomize_for_check(m.params, 2);
  const auto y = stem_forward(m, Var<double>(Tensor<double>({64, 64, 3}, 0.4))).value();
  // zero padding only touches the first row and column at each stride-2 layer
  for (std::size_t i = 1; i < 8; ++i)
    for (std::size_t j = 1; j < 8; ++j)
      for (std::size_t c = 0; c < y.dim(2); ++c) EXPECT_NEAR(y.at(i, j, c), y.at(1, 1, c), 1e-12);
}

TEST(Merge, TableOneShapes) {
  const auto s = build_model<float>(preset("dualtoken_s"), 1);
  const auto a = merge_patch(Var<float>(Tensor<float>({28, 28, 64}, 0.1f)), s.merges[0]);
  EXPECT_EQ(a.shape(), (Shape{14, 14, 128}));
  const auto b = merge_patch(Var<float>(Tensor<float>({14, 14, 128}, 0.1f)), s.merges[1]);
  EXPECT_EQ(b.shape(), (Shape{7, 7, 256}));
  EXPECT_THROW(merge_patch(Var<float>(Tensor<float>({7, 7, 128})), s.merges[1]), Error);
}

TEST(Merge, ConcatenationOracle) {
  ParamBuilder<double> pb(5);
  MergePatch<double> p(pb, "merge", 3, 5);
  std::mt19937_64 rng(6);
  for (auto& np : pb.params())
    for (auto& v : np.var.value().data()) v = std::normal_distribution<double>(0, 0.4)(rng);
  const auto x = oracle::random<double>({4, 6, 3}, rng);
  const auto y = merge_patch(Var<double>(x), p).value();
  ASSERT_EQ(y.shape(), (Shape{2, 3, 5}));
  const auto& g = p.norm.gamma.value();
  const auto& b = p.norm.beta.value();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      // row-major 2x2 neighbourhood, channels of each pixel kept together
      std::vector<double> cat;
      for (std::size_t di = 0; di < 2; ++di)
        for (std::size_t dj = 0; dj < 2; ++dj)
          for (std::size_t c = 0; c < 3; ++c) cat.push_back(x.at(2 * i + di, 2 * j + dj, c));
      double mu = 0, var = 0;
      for (double v : cat) mu += v / 12;
      for (double v : cat) var += (v - mu) * (v - mu) / 12;
      for (std::size_t k = 0; k < 12; ++k) cat[k] = (cat[k] - mu) / std::sqrt(var + 1e-6) * g[k] + b[k];
      for (std::size_t o = 0; o < 5; ++o) {
        double acc = p.proj.bias.value()[o];
        for (std::size_t k = 0; k < 12; ++k) acc += cat[k] * p.proj.weight.value().at(k, o);
        EXPECT_NEAR(y.at(i, j, o), acc, 1e-12);
      }
    }
}

TEST(ProjectTokens, IdentityKeepsTokens) {
  ParamBuilder<double> pb(7);
  Linear<double> proj(pb, "p", 6, 6, false);
  auto& w = proj.weight.value();
  std::fill(w.data().begin(), w.data().end(), 0.0);
  for (std::size_t i = 0; i < 6; ++i) w.at(i, i) = 1.0;
  std::mt19937_64 rng(8);
  const GlobalTokens<double> g{Var<double>(oracle::random<double>({9, 6}, rng)), 3, 3};
  const auto out = project_global_tokens(g, proj);
  EXPECT_EQ(out.tokens.value(), g.tokens.value());
  EXPECT_EQ(out.rows, 3u);
  EXPECT_EQ(out.cols, 3u);
}

TEST(ProjectTokens, ShapeAndMatmulOracle) {
  const auto s = build_model<double>(preset("dualtoken_s"), 9);
  std::mt19937_64 rng(10);
  const GlobalTokens<double> g{Var<double>(oracle::random<double>({49, 64}, rng)), 7, 7};
  const auto out = project_global_tokens(g, s.g_proj[0]);
  EXPECT_EQ(out.grid().shape(), (Shape{7, 7, 128}));
  EXPECT_FALSE(s.g_proj[0].bias.defined());
  EXPECT_LE(oracle::max_abs_diff(out.tokens.value(), oracle::matmul(g.tokens.value(), s.g_proj[0].weight.value())),
            1e-12);
}

TEST(Forward, DualTokenSAt224) {
  const auto m = build_model<float>(preset("dualtoken_s"), 11);
  const auto r = forward(m, Var<float>(image<float>(224, 12)));
  EXPECT_EQ(r.logits.shape(), (Shape{1000}));
  EXPECT_TRUE(r.logits.value().all_finite());
  ASSERT_EQ(r.acts.size(), 14u);
  // stride ladder 1/8, 1/16, 1/32 and an exact 7x7 grid everywhere
  const std::size_t sides[3] = {28, 14, 7};
  std::size_t b = 0;
  for (std::size_t s = 0; s < 3; ++s)
    for (int k = 0; k < m.cfg.stages[s].blocks; ++k, ++b) {
      EXPECT_EQ(r.acts[b].x_local.dim(0), sides[s]);
      EXPECT_EQ(r.acts[b].x_ds.shape(), (Shape{7, 7, std::size_t(m.cfg.stages[s].channels)}));
      EXPECT_FALSE(r.acts[b].interpolated) << "block " << b;
    }
  EXPECT_EQ(r.g.grid().shape(), (Shape{7, 7, 256}));
}

TEST(Forward, OffGridResolutionInterpolates) {
  const auto m = build_model<float>(preset("dualtoken_t"), 13);
  const auto r = forward(m, Var<float>(image<float>(256, 14)));
  EXPECT_EQ(r.acts.front().x_local.dim(0), 32u);
  EXPECT_TRUE(r.acts.front().interpolated);
  for (const auto& a : r.acts) EXPECT_EQ(a.x_ds.dim(0), 7u);
  EXPECT_EQ(r.g.count(), 49u);
}

TEST(Forward, ToyStrideLadderAndFiniteLogits) {
  const auto m = build_model<double>(preset("toy"), 15);
  const auto r = forward(m, Var<double>(image<double>(32, 16)));
  EXPECT_EQ(r.logits.size(), 8u);
  EXPECT_TRUE(r.logits.value().all_finite());
  EXPECT_EQ(r.acts[0].x_local.dim(0), 4u);
  EXPECT_EQ(r.acts[1].x_local.dim(0), 2u);
  EXPECT_EQ(r.acts[2].x_local.dim(0), 1u);
  for (const auto& a : r.acts) {
    EXPECT_EQ(a.g_new.dim(0), 4u);
  }
}

TEST(Forward, RejectsBadResolution) {
  const auto m = build_model<float>(preset("toy"), 1);
  EXPECT_THROW(forward(m, Var<float>(image<float>(40, 1))), Error);
}

TEST(Forward, DeterministicAndBatchPure) {
  const auto m = build_model<float>(preset("toy_mix"), 17);
  const auto a = image<float>(32, 1), b = image<float>(32, 2), c = image<float>(32, 3);
  const auto ab = forward_batch(m, {a, b, c});
  const auto ba = forward_batch(m, {c, b, a});
  EXPECT_EQ(ab[0], ba[2]);
  EXPECT_EQ(ab[1], ba[1]);
  EXPECT_EQ(ab[2], ba[0]);
  EXPECT_EQ(forward(m, Var<float>(a)).logits.value(), ab[0]);
  EXPECT_NE(ab[0], ab[1]);
}

TEST(Forward, EveryParameterGetsGradient) {
  for (const char* name : {"toy", "toy_mix"}) {
    auto m = build_model<double>(preset(name), 18);
    randomize_for_check(m.params, 18);
    GradTape<double> tape;
    {
      TapeScope<double> scope(tape);
      const auto r = forward(m, Var<double>(image<double>(32, 19)));
      backward(tape, cross_entropy(r.logits, 3));
    }
    for (const auto& p : m.params) {
      const auto g = p.var.grad();
      bool nonzero = false;
      for (double v : g.data()) nonzero = nonzero || v != 0.0;
      EXPECT_TRUE(nonzero) << name << " " << p.name;
    }
  }
}

TEST(Forward, ToyModelGradcheck) {
  GradCheckOptions opts;
  opts.max_coords_per_leaf = 6;
  opts.seed = 5;
  const auto r = gradcheck_model(preset("toy"), 20, opts);
  EXPECT_TRUE(r.report.pass) << r.report.worst;
  EXPECT_LE(r.report.max_rel_err, 1e-4);
}

TEST(Checkpoint, RoundTripBitIdentical) {
  const auto m = build_model<float>(preset("dualtoken_t"), 21);
  const auto path = temp_path("t.dtvt");
  save_checkpoint(m, path);
  const auto back = load_checkpoint<float>(path, preset("dualtoken_t"));
  ASSERT_EQ(back.params.size(), m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    EXPECT_EQ(back.params[i].name, m.params[i].name);
    ASSERT_EQ(back.params[i].var.value(), m.params[i].var.value()) << m.params[i].name;
  }
  std::remove(path.c_str());
}

TEST(Checkpoint, DoubleModelRoundTrip) {
  auto m = build_model<double>(preset("toy"), 22);
  randomize_for_check(m.params, 22);
  const auto path = temp_path("toy64.dtvt");
  save_checkpoint(m, path);
  const auto back = load_checkpoint<double>(path, preset("toy"));
  for (std::size_t i = 0; i < m.params.size(); ++i) EXPECT_EQ(back.params[i].var.value(), m.params[i].var.value());
  const auto img = image<double>(32, 23);
  EXPECT_EQ(forward(back, Var<double>(img)).logits.value(), forward(m, Var<double>(img)).logits.value());
  std::remove(path.c_str());
}

ErrorCode load_code(const std::string& path, const ModelConfig& cfg, std::string* what = nullptr) {
  try {
    load_checkpoint<float>(path, cfg);
  } catch (const Error& e) {
    if (what) *what = e.what();
    return e.code();
  }
  return ErrorCode{};
}

TEST(Checkpoint, CorruptedMagic) {
  const auto m = build_model<float>(preset("toy"), 24);
  const auto path = temp_path("bad_magic.dtvt");
  save_checkpoint(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  EXPECT_EQ(load_code(path, preset("toy")), ErrorCode::kFormat);
  std::remove(path.c_str());
}

TEST(Checkpoint, TruncatedAndTrailingBytes) {
  const auto m = build_model<float>(preset("toy"), 25);
  const auto path = temp_path("trunc.dtvt");
  save_checkpoint(m, path);
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), {});
  }
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), std::streamsize(bytes.size() - 7));
  }
  EXPECT_EQ(load_code(path, preset("toy")), ErrorCode::kFormat);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), std::streamsize(bytes.size()));
    f.put('\0');
  }
  EXPECT_EQ(load_code(path, preset("toy")), ErrorCode::kFormat);
  {
    std::string v = bytes;
    v[4] = 9;  // version field
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(v.data(), std::streamsize(v.size()));
  }
  EXPECT_EQ(load_code(path, preset("toy")), ErrorCode::kFormat);
  EXPECT_EQ(load_code(temp_path("missing.dtvt"), preset("toy")), ErrorCode::kIo);
  std::remove(path.c_str());
}

TEST(Checkpoint, CrossConfigNamesFirstTensor) {
  const auto s = build_model<float>(preset("dualtoken_s"), 26);
  const auto path = temp_path("s.dtvt");
  save_checkpoint(s, path);
  std::string what;
  EXPECT_EQ(load_code(path, preset("dualtoken_t"), &what), ErrorCode::kShapeMismatch);
  EXPECT_NE(what.find("'" + s.params.front().name + "'"), std::string::npos) << what;
  std::remove(path.c_str());
}

}  // namespace
}  // namespace dtvit
