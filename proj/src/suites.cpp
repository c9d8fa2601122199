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

#include "dualtoken/suites.hpp"

#include <cmath>
#include <functional>

#include "dualtoken/block.hpp"
#include "dualtoken/model.hpp"

namespace dtvit {
namespace {

using V = Var<double>;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

class Suite {
 public:
  Suite(std::uint64_t seed, const GradCheckOptions& opts) : opts_(opts), rng_(seed), seed_(seed) {}

  V leaf(const Shape& shape, double stddev = 1.0) { return V::parameter(random_tensor(shape, rng_, stddev)); }

  // `inputs` are the non-parameter leaves; every parameter in `pb` is a leaf too.
  void run(const std::string& name, const std::function<V()>& f, std::vector<V> inputs,
           ParamBuilder<double>* pb = nullptr) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < inputs.size(); ++i) names.push_back("input" + std::to_string(i));
    if (pb) {
      randomize_for_check(pb->params(), seed_ + results_.size());
      for (const auto& p : pb->params()) {
        inputs.push_back(p.var);
        names.push_back(p.name);
      }
    }
    GradCheckOptions o = opts_;
    o.seed = seed_ + results_.size();
    results_.push_back({name, grad_check(f, inputs, o, names)});
  }

  std::uint64_t next_seed() { return rng_(); }
  std::vector<CheckResult> take() { return std::move(results_); }

 private:
  GradCheckOptions opts_;
  std::mt19937_64 rng_;
  std::uint64_t seed_;
  std::vector<CheckResult> results_;
};

BlockConfig small_block() {
  BlockConfig b;
  b.channels = 8;
  b.heads = 2;
  b.dw_kernel = 3;
  b.ds_steps = 1;
  b.alpha = 0.3;
  b.token_grid = 2;
  b.normal_tokens = 3;
  b.ffn_ratio = 2;
  b.mlp_ratio = 2;
  b.window_size = 4;
  return b;
}

}  // namespace

GradScope parse_grad_scope(const std::string& s) {
  if (s == "primitives") return GradScope::kPrimitives;
  if (s == "blocks") return GradScope::kBlocks;
  if (s == "model") return GradScope::kModel;
  fail(ErrorCode::kInvalidArgument, "unknown gradcheck scope '" + s + "' (primitives|blocks|model)");
}

Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = normal(rng);
  return t;
}

void randomize_for_check(ParamList<double>& params, std::uint64_t seed) {
  for (auto& p : params) {
    std::mt19937_64 rng(mix_seed(seed, p.name));
    auto& t = p.var.value();
    double mean = 0.0, stddev = 0.2;
    if (ends_with(p.name, ".gamma")) {
      mean = 1.0;
      stddev = 0.1;
    } else if (ends_with(p.name, ".beta")) {
      stddev = 0.1;
    } else if (t.rank() >= 2) {
      std::size_t fan_in = 1;
      for (std::size_t a = 0; a + 1 < t.rank(); ++a) fan_in *= t.dim(a);
      stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    }
    std::normal_distribution<double> normal(mean, stddev);
    for (auto& v : t.data()) v = normal(rng);
  }
}

V probe_loss(const V& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, V(random_tensor(y.shape(), rng))));
}

std::vector<CheckResult> gradcheck_primitives(std::uint64_t seed, const GradCheckOptions& opts) {
  Suite s(seed, opts);
  const std::uint64_t ps = s.next_seed();
  auto probe = [ps](const V& y) { return probe_loss(y, ps); };

  {
    V a = s.leaf({3, 4}), b = s.leaf({3, 4});
    s.run("add", [&] { return probe(add(a, b)); }, {a, b});
    s.run("sub", [&] { return probe(sub(a, b)); }, {a, b});
    s.run("mul", [&] { return probe(mul(a, b)); }, {a, b});
    s.run("scale", [&] { return probe(scale(a, 0.7)); }, {a});
    s.run("add_scalar", [&] { return probe(add_scalar(a, 0.3)); }, {a});
    s.run("gelu", [&] { return probe(gelu(a)); }, {a});
    s.run("sigmoid", [&] { return probe(sigmoid(a)); }, {a});
    s.run("transpose", [&] { return probe(transpose(a)); }, {a});
    s.run("reshape", [&] { return probe(reshape(a, {2, 6})); }, {a});
    s.run("mean_rows", [&] { return probe(mean_rows(a)); }, {a});
    s.run("sum", [&] { return probe(sum(a)); }, {a});
    s.run("mean", [&] { return probe(mean(a)); }, {a});
  }
  {
    V a = s.leaf({3, 4}), b = s.leaf({4, 5});
    s.run("matmul", [&] { return probe(matmul(a, b)); }, {a, b});
  }
  {
    V x = s.leaf({5, 6, 3}), w = s.leaf({3, 3, 3, 4}), b = s.leaf({4});
    s.run("conv2d", [&] { return probe(conv2d(x, w, b, {1, 1, 1})); }, {x, w, b});
    V x2 = s.leaf({6, 6, 3});
    s.run("conv2d_stride2", [&] { return probe(conv2d(x2, w, b, {2, 1, 1})); }, {x2, w, b});
    V xg = s.leaf({5, 5, 4}), wg = s.leaf({3, 3, 2, 4});
    s.run("conv2d_grouped", [&] { return probe(conv2d(xg, wg, V(), {1, 1, 2})); }, {xg, wg});
    V xd = s.leaf({5, 5, 3}), wd = s.leaf({5, 5, 1, 3}), bd = s.leaf({3});
    s.run("conv2d_depthwise", [&] { return probe(conv2d(xd, wd, bd, {1, 2, 3})); }, {xd, wd, bd});
    V w1 = s.leaf({1, 1, 3, 2});
    s.run("conv2d_pointwise", [&] { return probe(conv2d(x, w1, V(), {1, 0, 1})); }, {x, w1});
  }
  {
    V x = s.leaf({4, 6, 3}), y = s.leaf({6, 6, 2});
    s.run("avgpool2d_k2", [&] { return probe(avgpool2d(x, 2)); }, {x});
    s.run("avgpool2d_k3", [&] { return probe(avgpool2d(y, 3)); }, {y});
  }
  {
    V x = s.leaf({4, 6}), g = s.leaf({6}), b = s.leaf({6});
    s.run("layernorm", [&] { return probe(layernorm(x, g, b)); }, {x, g, b});
    V z = s.leaf({3, 5}, 2.0);
    s.run("softmax", [&] { return probe(softmax(z)); }, {z});
  }
  {
    V x = s.leaf({4, 5, 2}), y = s.leaf({3, 3, 2}), z = s.leaf({2, 2, 1});
    s.run("bilinear_resize_mixed", [&] { return probe(bilinear_resize(x, 7, 3)); }, {x});
    s.run("bilinear_resize_down", [&] { return probe(bilinear_resize(y, 2, 2)); }, {y});
    s.run("bilinear_resize_up", [&] { return probe(bilinear_resize(z, 5, 5)); }, {z});
  }
  {
    V x = s.leaf({5, 4}), a = s.leaf({3, 2}), b = s.leaf({3, 3}), c = s.leaf({2, 4});
    s.run("slice_cols", [&] { return probe(slice_cols(x, 1, 3)); }, {x});
    s.run("slice_rows", [&] { return probe(slice_rows(x, 1, 4)); }, {x});
    s.run("concat_cols", [&] {
      const std::array<V, 2> parts{a, b};
      return probe(concat_cols<double>(parts));
    }, {a, b});
    s.run("concat_rows", [&] {
      const std::array<V, 2> parts{x, c};
      return probe(concat_rows<double>(parts));
    }, {x, c});
    const std::vector<std::size_t> idx{2, 0, 2, 4};
    s.run("gather_rows", [&] { return probe(gather_rows(x, std::span<const std::size_t>(idx))); }, {x});
  }
  {
    V x = s.leaf({3, 4}), b = s.leaf({4}), r = s.leaf({3}), c = s.leaf({4});
    s.run("add_row_vector", [&] { return probe(add_row_vector(x, b)); }, {x, b});
    s.run("scale_rows", [&] { return probe(scale_rows(x, r)); }, {x, r});
    s.run("scale_cols", [&] { return probe(scale_cols(x, c)); }, {x, c});
    V logits = s.leaf({6});
    s.run("cross_entropy", [&] { return cross_entropy(logits, 2); }, {logits});
  }
  {
    ParamBuilder<double> pb(seed);
    Linear<double> lin(pb, "linear", 5, 3);
    V x = s.leaf({4, 5});
    s.run("linear", [&] { return probe(lin.forward(x)); }, {x}, &pb);
  }
  {
    ParamBuilder<double> pb(seed);
    MultiHeadAttention<double> attn(pb, "attn", 8, 2);
    V x = s.leaf({5, 8});
    s.run("mhsa_self", [&] { return probe(attn.forward(x, x).out); }, {x}, &pb);
  }
  {
    ParamBuilder<double> pb(seed);
    MultiHeadAttention<double> attn(pb, "attn", 8, 4);
    V q = s.leaf({4, 8}), kv = s.leaf({6, 8});
    s.run("mhsa_cross", [&] { return probe(attn.forward(q, kv).out); }, {q, kv}, &pb);
  }
  return s.take();
}

std::vector<CheckResult> gradcheck_blocks(std::uint64_t seed, const GradCheckOptions& opts) {
  Suite s(seed, opts);
  const std::uint64_t ps = s.next_seed();
  auto probe = [ps](const V& y) { return probe_loss(y, ps); };
  const BlockConfig base = small_block();

  {
    ParamBuilder<double> pb(seed);
    ConvEncoderParams<double> p(pb, "encoder", 8, 3);
    V x = s.leaf({6, 6, 8});
    s.run("conv_encoder", [&] { return probe(conv_encoder(x, p)); }, {x}, &pb);
  }
  {
    ParamBuilder<double> pb(seed);
    MultiHeadAttention<double> attn(pb, "window_attn", 8, 2);
    V x = s.leaf({8, 4, 8});
    s.run("window_msa_local", [&] { return probe(window_msa_local(x, attn, 4)); }, {x}, &pb);
  }
  {
    ParamBuilder<double> pb(seed);
    DownsampleParams<double> p(pb, "downsample", 8, 1);
    V x = s.leaf({8, 8, 8});
    s.run("stepwise_downsample_m1", [&] { return probe(stepwise_downsample(x, p, base)); }, {x}, &pb);
  }
  {
    BlockConfig c = base;
    c.ds_steps = 0;
    c.token_grid = 4;
    V x = s.leaf({8, 8, 8});
    s.run("stepwise_downsample_m0", [&] { return probe(stepwise_downsample(x, DownsampleParams<double>(), c)); },
          {x});
    V y = s.leaf({12, 12, 8});
    s.run("stepwise_downsample_resize", [&] {
      return probe(stepwise_downsample(y, DownsampleParams<double>(), c));
    }, {y});
    BlockConfig one = base;
    one.ds_kind = DownsampleKind::kOneStep;
    s.run("onestep_downsample", [&] { return probe(stepwise_downsample(x, DownsampleParams<double>(), one)); },
          {x});
  }
  {
    ParamBuilder<double> pb(seed);
    MultiHeadAttention<double> attn(pb, "attn", 8, 2);
    V x = s.leaf({2, 2, 8});
    s.run("global_aggregate", [&] { return probe(global_aggregate(x, attn).out); }, {x}, &pb);
  }
  for (MlpKind kind : {MlpKind::kNormal, MlpKind::kMix}) {
    const std::string tag(to_string(kind));
    {
      ParamBuilder<double> pb(seed);
      TokenMlpParams<double> p(pb, "token_mlp", kind, 8, 4, 2);
      V g = s.leaf({4, 8});
      s.run("token_mlp_" + tag, [&] { return probe(token_mlp(g, p)); }, {g}, &pb);
    }
    {
      ParamBuilder<double> pb(seed);
      TokenMlpParams<double> p(pb, "token_mlp", kind, 8, 4, 2);
      V g = s.leaf({4, 8}), xga = s.leaf({4, 8});
      s.run("fuse_global_tokens_" + tag, [&] {
        return probe(fuse_global_tokens(GlobalTokens<double>{g, 2, 2}, xga, 0.3, p));
      }, {g, xga}, &pb);
    }
  }
  {
    ParamBuilder<double> pb(seed);
    MultiHeadAttention<double> attn(pb, "fuse_attn", 8, 2);
    V g = s.leaf({4, 8}), src = s.leaf({4, 8}), g1 = s.leaf({3, 8}), img = s.leaf({16, 8});
    s.run("fuse_global_tokens_msa_posaware", [&] {
      return probe(fuse_global_tokens_msa(GlobalTokens<double>{g, 2, 2}, src, attn));
    }, {g, src}, &pb);
    s.run("fuse_global_tokens_msa_normal", [&] {
      return probe(fuse_global_tokens_msa(GlobalTokens<double>{g1, 1, 3}, img, attn));
    }, {g1, img});
  }
  {
    ParamBuilder<double> pb(seed);
    MultiHeadAttention<double> attn(pb, "attn", 8, 2);
    V img = s.leaf({16, 8}), g = s.leaf({4, 8});
    s.run("global_broadcast", [&] { return probe(global_broadcast(img, g, attn).out); }, {img, g}, &pb);
  }
  {
    V a = s.leaf({4, 4, 8}), b = s.leaf({4, 4, 8});
    s.run("dual_token_fusion", [&] { return probe(dual_token_fusion(a, b)); }, {a, b});
  }
  {
    ParamBuilder<double> pb(seed);
    FfnParams<double> p(pb, "ffn", 8, 2);
    V x = s.leaf({10, 8});
    s.run("ffn", [&] { return probe(ffn(x, p)); }, {x}, &pb);
  }
  {
    ParamBuilder<double> pb(seed);
    BiDimParams<double> p(pb, "bidim", 8);
    V x = s.leaf({10, 8});
    s.run("bidim_attn", [&] { return probe(bidim_attn(x, p)); }, {x}, &pb);
  }
  {
    ParamBuilder<double> pb(seed);
    MergePatch<double> p(pb, "merge", 8, 12);
    V x = s.leaf({4, 6, 8});
    s.run("merge_patch", [&] { return probe(merge_patch(x, p)); }, {x}, &pb);
  }
  {
    ParamBuilder<double> pb(seed);
    Linear<double> proj(pb, "g_proj", 8, 12, false);
    V g = s.leaf({4, 8});
    s.run("project_global_tokens", [&] {
      return probe(project_global_tokens(GlobalTokens<double>{g, 2, 2}, proj).tokens);
    }, {g}, &pb);
  }

  struct Variant {
    const char* name;
    LocalKind local;
    MlpKind mlp;
    DownsampleKind ds;
    GlobalMode mode;
    std::size_t side;
    bool bidim;
  };
  const Variant variants[] = {
      {"block_conv_normal_stepwise", LocalKind::kConvEncoder, MlpKind::kNormal, DownsampleKind::kStepWise,
       GlobalMode::kPositionAwareSum, 8, true},
      {"block_conv_mix_onestep", LocalKind::kConvEncoder, MlpKind::kMix, DownsampleKind::kOneStep,
       GlobalMode::kPositionAwareSum, 8, true},
      {"block_window_mix_resize", LocalKind::kWindowMsa, MlpKind::kMix, DownsampleKind::kStepWise,
       GlobalMode::kPositionAwareSum, 12, true},
      {"block_conv_posaware_msa", LocalKind::kConvEncoder, MlpKind::kNormal, DownsampleKind::kStepWise,
       GlobalMode::kPositionAwareMsa, 8, true},
      {"block_window_normal_msa", LocalKind::kWindowMsa, MlpKind::kNormal, DownsampleKind::kStepWise,
       GlobalMode::kNormalMsa, 8, true},
      {"block_conv_no_bidim", LocalKind::kConvEncoder, MlpKind::kNormal, DownsampleKind::kStepWise,
       GlobalMode::kPositionAwareSum, 8, false},
  };
  for (const Variant& v : variants) {
    BlockConfig c = base;
    c.local_kind = v.local;
    c.mlp_kind = v.mlp;
    c.ds_kind = v.ds;
    c.global_mode = v.mode;
    c.bidim_enabled = v.bidim;
    ParamBuilder<double> pb(seed);
    BlockParams<double> p(pb, "block", c);
    V x = s.leaf({v.side, v.side, 8});
    const std::size_t rows = c.grid_tokens() ? c.token_grid : 1;
    const std::size_t cols = c.global_token_count() / rows;
    V g = s.leaf({rows * cols, 8});
    s.run(v.name, [&] {
      const BlockOutput<double> out = dual_token_block(x, GlobalTokens<double>{g, rows, cols}, p);
      return add(probe(out.x), probe(out.g.tokens));
    }, {x, g}, &pb);
  }
  return s.take();
}

CheckResult gradcheck_model(const ModelConfig& cfg, std::uint64_t seed, const GradCheckOptions& opts) {
  Model<double> m = build_model<double>(cfg, seed);
  randomize_for_check(m.params, seed);
  std::mt19937_64 rng(seed);
  const std::size_t side = static_cast<std::size_t>(cfg.input_resolution);
  V image = V::parameter(random_tensor({side, side, 3}, rng));
  const std::size_t label = static_cast<std::size_t>(seed % static_cast<std::uint64_t>(cfg.num_classes));
  std::vector<V> leaves{image};
  std::vector<std::string> names{"image"};
  for (const auto& p : m.params) {
    leaves.push_back(p.var);
    names.push_back(p.name);
  }
  GradCheckOptions o = opts;
  o.seed = seed;
  return {"model_" + cfg.name,
          grad_check([&] { return cross_entropy(forward(m, image).logits, label); }, leaves, o, names)};
}

std::vector<CheckResult> run_gradcheck_suite(GradScope scope, const ModelConfig& model_cfg, std::uint64_t seed,
                                             const GradCheckOptions& opts) {
  switch (scope) {
    case GradScope::kPrimitives: return gradcheck_primitives(seed, opts);
    case GradScope::kBlocks: return gradcheck_blocks(seed, opts);
    case GradScope::kModel: return {gradcheck_model(model_cfg, seed, opts)};
  }
  return {};
}

}  // namespace dtvit
