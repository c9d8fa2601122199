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

#include "dualtoken/model.hpp"

#include <unordered_map>

namespace dtvit {

template <class T>
MergePatch<T>::MergePatch(ParamBuilder<T>& pb, const std::string& name, std::size_t cin, std::size_t cout)
    : norm(pb, name + ".norm", 4 * cin), proj(pb, name + ".proj", 4 * cin, cout) {}

template <class T>
std::size_t Model<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.size();
  return n;
}

template <class T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Model<T> m;
  m.cfg = cfg;
  m.seed = seed;
  ParamBuilder<T> pb(seed);

  const auto ch = [&](std::size_t s) { return static_cast<std::size_t>(cfg.stages[s].channels); };
  const std::size_t c1 = ch(0);
  const std::size_t half = c1 / 2;
  check(half > 0, ErrorCode::kConfig, "stage 1 needs at least 2 channels for the stem");
  const kernels::Conv2dSpec s2{2, 1, 1};
  m.stem[0] = Conv2d<T>(pb, "stem.conv0", 3, half, 3, s2);
  m.stem_norms[0] = LayerNorm<T>(pb, "stem.norm0", half);
  m.stem[1] = Conv2d<T>(pb, "stem.conv1", half, half, 3, s2);
  m.stem_norms[1] = LayerNorm<T>(pb, "stem.norm1", half);
  m.stem[2] = Conv2d<T>(pb, "stem.conv2", half, c1, 3, s2);

  const BlockConfig b0 = block_config(cfg, 0);
  if (b0.grid_tokens()) {
    m.g_rows = m.g_cols = b0.token_grid;
  } else {
    m.g_rows = 1;
    m.g_cols = b0.normal_tokens;
  }
  m.global_init = pb.make("global_tokens", {m.g_rows, m.g_cols, c1}, InitScheme::kTruncNormal);

  for (std::size_t s = 0; s < 3; ++s) {
    const std::string stage = "stage" + std::to_string(s + 1);
    if (s > 0) {
      m.merges[s - 1] = MergePatch<T>(pb, stage + ".merge", ch(s - 1), ch(s));
      m.g_proj[s - 1] = Linear<T>(pb, stage + ".g_proj", ch(s - 1), ch(s), false);
    }
    const BlockConfig bc = block_config(cfg, s);
    for (int b = 0; b < cfg.stages[s].blocks; ++b)
      m.stages[s].emplace_back(pb, stage + ".block" + std::to_string(b), bc);
  }

  const std::size_t c3 = ch(2);
  m.head_norm = LayerNorm<T>(pb, "head.norm", c3);
  std::size_t feat = c3;
  if (cfg.neck_dim > 0) {
    feat = static_cast<std::size_t>(cfg.neck_dim);
    m.neck = Linear<T>(pb, "head.neck", c3, feat);
    m.neck_norm = LayerNorm<T>(pb, "head.neck_norm", feat);
  }
  m.head = Linear<T>(pb, "head.fc", feat, static_cast<std::size_t>(cfg.num_classes));
  m.params = pb.release();
  return m;
}

template <class T>
Var<T> stem_forward(const Model<T>& m, const Var<T>& image) {
  check(image.value().rank() == 3 && image.dim(2) == 3, ErrorCode::kShapeMismatch,
        "stem_forward: expected S x S x 3, got " + shape_str(image.shape()));
  check(image.dim(0) == image.dim(1), ErrorCode::kShapeMismatch,
        "stem_forward: input must be square, got " + shape_str(image.shape()));
  check(image.dim(0) % 8 == 0, ErrorCode::kShapeMismatch,
        "stem_forward: side " + std::to_string(image.dim(0)) + " not divisible by 8");
  Var<T> x = gelu(m.stem_norms[0].forward(m.stem[0].forward(image)));
  x = gelu(m.stem_norms[1].forward(m.stem[1].forward(x)));
  return m.stem[2].forward(x);
}

template <class T>
Var<T> merge_patch(const Var<T>& x, const MergePatch<T>& p) {
  check(x.value().rank() == 3, ErrorCode::kShapeMismatch, "merge_patch: expected H x W x C");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  check(H % 2 == 0 && W % 2 == 0, ErrorCode::kShapeMismatch,
        "merge_patch: odd extent in " + shape_str(x.shape()));
  check(p.norm.gamma.size() == 4 * C, ErrorCode::kShapeMismatch,
        "merge_patch: input channels " + std::to_string(C) + " do not match parameters");
  std::vector<std::size_t> idx;
  idx.reserve(H * W);
  for (std::size_t i = 0; i < H / 2; ++i)
    for (std::size_t j = 0; j < W / 2; ++j)
      for (std::size_t di = 0; di < 2; ++di)
        for (std::size_t dj = 0; dj < 2; ++dj) idx.push_back((2 * i + di) * W + 2 * j + dj);
  const std::size_t n = (H / 2) * (W / 2);
  const Var<T> cat = reshape(gather_rows(reshape(x, {H * W, C}), std::span<const std::size_t>(idx)), {n, 4 * C});
  const Var<T> y = p.proj.forward(p.norm.forward(cat));
  return reshape(y, {H / 2, W / 2, p.proj.out});
}

template <class T>
GlobalTokens<T> project_global_tokens(const GlobalTokens<T>& g, const Linear<T>& proj) {
  check(g.channels() == proj.in, ErrorCode::kShapeMismatch,
        "project_global_tokens: G has " + std::to_string(g.channels()) + " channels, projection expects " +
            std::to_string(proj.in));
  return GlobalTokens<T>{proj.forward(g.tokens), g.rows, g.cols};
}

template <class T>
GlobalTokens<T> initial_global_tokens(const Model<T>& m) {
  const std::size_t c1 = m.global_init.dim(2);
  return GlobalTokens<T>{reshape(m.global_init, {m.g_rows * m.g_cols, c1}), m.g_rows, m.g_cols};
}

template <class T>
ForwardResult<T> forward(const Model<T>& m, const Var<T>& image) {
  check(image.value().rank() == 3, ErrorCode::kShapeMismatch, "forward: expected S x S x 3");
  validate_resolution(m.cfg, static_cast<int>(image.dim(0)));
  ForwardResult<T> r;
  Var<T> x = stem_forward(m, image);
  GlobalTokens<T> g = initial_global_tokens(m);
  for (std::size_t s = 0; s < 3; ++s) {
    if (s > 0) {
      x = merge_patch(x, m.merges[s - 1]);
      g = project_global_tokens(g, m.g_proj[s - 1]);
    }
    for (const auto& bp : m.stages[s]) {
      BlockOutput<T> out = dual_token_block(x, g, bp);
      x = out.x;
      g = out.g;
      r.acts.push_back(std::move(out.acts));
    }
  }
  const std::size_t n = x.dim(0) * x.dim(1), c = x.dim(2);
  Var<T> h = mean_rows(m.head_norm.forward(reshape(x, {n, c})));
  if (m.cfg.neck_dim > 0) h = gelu(m.neck_norm.forward(m.neck.forward(h)));
  r.logits = reshape(m.head.forward(h), {m.head.out});
  r.g = g;
  return r;
}

template <class T>
std::vector<Tensor<T>> forward_batch(const Model<T>& m, const std::vector<Tensor<T>>& images) {
  NoGradScope<T> no_grad;
  std::vector<Tensor<T>> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(forward(m, Var<T>(img)).logits.value());
  return out;
}

template <class T>
void save_checkpoint(const Model<T>& m, const std::string& path) {
  std::vector<StoredTensor> ts;
  ts.reserve(m.params.size());
  for (const auto& p : m.params) ts.push_back(to_stored(p.name, p.var.value()));
  write_container(path, ts);
}

template <class T>
void assign_parameters(Model<T>& m, const std::vector<StoredTensor>& tensors) {
  std::unordered_map<std::string, const StoredTensor*> by_name;
  for (const auto& t : tensors) by_name.emplace(t.name, &t);
  // Validate everything before mutating so a failed load leaves m untouched.
  for (const auto& p : m.params) {
    auto it = by_name.find(p.name);
    check(it != by_name.end(), ErrorCode::kFormat, "checkpoint lacks tensor '" + p.name + "'");
    check(it->second->shape == p.var.shape(), ErrorCode::kShapeMismatch,
          "tensor '" + p.name + "': checkpoint shape " + shape_str(it->second->shape) + " vs model " +
              shape_str(p.var.shape()));
  }
  for (auto& p : m.params) {
    const StoredTensor& s = *by_name.at(p.name);
    auto dst = p.var.value().data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(s.values[i]);
  }
}

template <class T>
Model<T> load_checkpoint(const std::string& path, const ModelConfig& cfg) {
  const auto tensors = read_container(path);
  Model<T> m = build_model<T>(cfg, 0);
  assign_parameters(m, tensors);
  return m;
}

#define DTVIT_INSTANTIATE(T)                                                                      \
  template struct MergePatch<T>;                                                                  \
  template struct Model<T>;                                                                       \
  template Model<T> build_model<T>(const ModelConfig&, std::uint64_t);                            \
  template Var<T> stem_forward<T>(const Model<T>&, const Var<T>&);                                \
  template Var<T> merge_patch<T>(const Var<T>&, const MergePatch<T>&);                            \
  template GlobalTokens<T> project_global_tokens<T>(const GlobalTokens<T>&, const Linear<T>&);    \
  template GlobalTokens<T> initial_global_tokens<T>(const Model<T>&);                             \
  template ForwardResult<T> forward<T>(const Model<T>&, const Var<T>&);                           \
  template std::vector<Tensor<T>> forward_batch<T>(const Model<T>&, const std::vector<Tensor<T>>&); \
  template void save_checkpoint<T>(const Model<T>&, const std::string&);                          \
  template void assign_parameters<T>(Model<T>&, const std::vector<StoredTensor>&);                \
  template Model<T> load_checkpoint<T>(const std::string&, const ModelConfig&);

DTVIT_INSTANTIATE(float)
DTVIT_INSTANTIATE(double)

}  // namespace dtvit
