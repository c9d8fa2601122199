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

#include "dualtoken/block.hpp"

#include <array>

namespace dtvit {
namespace {

template <class F>
auto annotate(const char* step, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("dual_token_block[") + step + "]: " + e.what());
  }
}

}  // namespace

template <class T>
ConvEncoderParams<T>::ConvEncoderParams(ParamBuilder<T>& pb, const std::string& name, std::size_t channels,
                                        std::size_t kernel)
    : dw(pb, name + ".dw", channels, channels, kernel, {1, kernel / 2, channels}),
      norm(pb, name + ".norm", channels),
      pw1(pb, name + ".pw1", channels, 4 * channels, 1, {1, 0, 1}),
      pw2(pb, name + ".pw2", 4 * channels, channels, 1, {1, 0, 1}) {}

template <class T>
DownsampleParams<T>::DownsampleParams(ParamBuilder<T>& pb, const std::string& name, std::size_t channels,
                                      std::size_t steps) {
  for (std::size_t m = 0; m < steps; ++m)
    convs.emplace_back(pb, name + ".conv" + std::to_string(m), channels, channels, 3,
                       kernels::Conv2dSpec{1, 1, 1});
}

template <class T>
TokenMlpParams<T>::TokenMlpParams(ParamBuilder<T>& pb, const std::string& name, MlpKind kind,
                                  std::size_t channels, std::size_t tokens, std::size_t ratio)
    : kind(kind), norm(pb, name + ".norm", channels) {
  if (kind == MlpKind::kNormal) {
    fc1 = Linear<T>(pb, name + ".fc1", channels, ratio * channels);
    fc2 = Linear<T>(pb, name + ".fc2", ratio * channels, channels);
  } else {
    fc1 = Linear<T>(pb, name + ".channel_fc", channels, channels);
    fc2 = Linear<T>(pb, name + ".token_fc", tokens, tokens);
  }
}

template <class T>
FfnParams<T>::FfnParams(ParamBuilder<T>& pb, const std::string& name, std::size_t channels, std::size_t ratio)
    : norm(pb, name + ".norm", channels),
      fc1(pb, name + ".fc1", channels, ratio * channels),
      fc2(pb, name + ".fc2", ratio * channels, channels) {}

template <class T>
BiDimParams<T>::BiDimParams(ParamBuilder<T>& pb, const std::string& name, std::size_t channels)
    : spatial(pb, name + ".spatial", channels, 1), channel(pb, name + ".channel", channels, channels) {}

template <class T>
BlockParams<T>::BlockParams(ParamBuilder<T>& pb, const std::string& name, const BlockConfig& c) : cfg(c) {
  check(c.heads > 0 && c.channels % c.heads == 0, ErrorCode::kConfig,
        name + ": channels " + std::to_string(c.channels) + " not divisible by heads " +
            std::to_string(c.heads));
  if (c.local_kind == LocalKind::kConvEncoder)
    encoder = ConvEncoderParams<T>(pb, name + ".encoder", c.channels, c.dw_kernel);
  else
    window_attn = MultiHeadAttention<T>(pb, name + ".window_attn", c.channels, c.heads);
  const bool uses_ds = c.global_mode != GlobalMode::kNormalMsa;
  if (uses_ds && !c.skip_downsample && c.ds_kind == DownsampleKind::kStepWise)
    downsample = DownsampleParams<T>(pb, name + ".downsample", c.channels, c.ds_steps);
  attn = MultiHeadAttention<T>(pb, name + ".attn", c.channels, c.heads);
  if (c.global_mode == GlobalMode::kPositionAwareSum)
    token_mlp = TokenMlpParams<T>(pb, name + ".token_mlp", c.mlp_kind, c.channels,
                                  c.global_token_count(), c.mlp_ratio);
  else
    fuse_attn = MultiHeadAttention<T>(pb, name + ".fuse_attn", c.channels, c.heads);
  ffn = FfnParams<T>(pb, name + ".ffn", c.channels, c.ffn_ratio);
  if (c.bidim_enabled) bidim = BiDimParams<T>(pb, name + ".bidim", c.channels);
}

template <class T>
Var<T> conv_encoder(const Var<T>& x, const ConvEncoderParams<T>& p) {
  check(x.value().rank() == 3 && x.dim(2) == p.dw.weight.dim(3), ErrorCode::kShapeMismatch,
        "conv_encoder: input " + shape_str(x.shape()) + " does not match encoder channels");
  const Var<T> h = p.pw2.forward(gelu(p.pw1.forward(p.norm.forward(p.dw.forward(x)))));
  return add(x, h);
}

template <class T>
Var<T> window_msa_local(const Var<T>& x, const MultiHeadAttention<T>& attn, std::size_t window) {
  check(x.value().rank() == 3, ErrorCode::kShapeMismatch, "window_msa_local: expected H x W x C");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  check(window > 0 && H % window == 0 && W % window == 0, ErrorCode::kShapeMismatch,
        "window_msa_local: " + shape_str(x.shape()) + " not divisible into " + std::to_string(window) +
            "x" + std::to_string(window) + " windows");
  const std::size_t per = window * window;
  std::vector<std::size_t> order;
  order.reserve(H * W);
  for (std::size_t wy = 0; wy < H / window; ++wy)
    for (std::size_t wx = 0; wx < W / window; ++wx)
      for (std::size_t iy = 0; iy < window; ++iy)
        for (std::size_t ix = 0; ix < window; ++ix)
          order.push_back((wy * window + iy) * W + wx * window + ix);
  std::vector<std::size_t> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;

  const Var<T> tokens = gather_rows(reshape(x, {H * W, C}), std::span<const std::size_t>(order));
  std::vector<Var<T>> outs;
  for (std::size_t k = 0; k < order.size() / per; ++k) {
    const Var<T> win = slice_rows(tokens, k * per, (k + 1) * per);
    outs.push_back(attn.forward(win, win).out);
  }
  const Var<T> merged = outs.size() == 1 ? outs[0] : concat_rows<T>(outs);
  const Var<T> restored = gather_rows(merged, std::span<const std::size_t>(inverse));
  return add(x, reshape(restored, {H, W, C}));
}

template <class T>
Var<T> stepwise_downsample(const Var<T>& x_local, const DownsampleParams<T>& p, const BlockConfig& cfg,
                           bool* interpolated) {
  check(x_local.value().rank() == 3, ErrorCode::kShapeMismatch, "stepwise_downsample: expected H x W x C");
  const std::size_t g = cfg.token_grid;
  Var<T> cur = x_local;
  auto pool2 = [&](const Var<T>& v) {
    check(v.dim(0) % 2 == 0 && v.dim(1) % 2 == 0, ErrorCode::kConfig,
          "stepwise_downsample: resolution " + shape_str(x_local.shape()) +
              " is inconsistent with ds_steps " + std::to_string(cfg.ds_steps));
    return avgpool2d(v, 2);
  };
  if (!cfg.skip_downsample) {
    if (cfg.ds_kind == DownsampleKind::kOneStep) {
      const std::size_t H = cur.dim(0), W = cur.dim(1);
      if (H == W && H >= g && H % g == 0 && H != g) cur = avgpool2d(cur, H / g);
    } else {
      check(p.convs.size() == cfg.ds_steps, ErrorCode::kConfig,
            "stepwise_downsample: parameter count does not match ds_steps");
      cur = pool2(cur);
      for (const auto& conv : p.convs) cur = pool2(conv.forward(cur));
    }
  }
  const bool resize = cur.dim(0) != g || cur.dim(1) != g;
  if (interpolated) *interpolated = resize;
  if (resize) cur = bilinear_resize(cur, g, g);
  return cur;
}

template <class T>
AttentionOutput<T> global_aggregate(const Var<T>& x_ds, const MultiHeadAttention<T>& attn) {
  check(x_ds.value().rank() == 3, ErrorCode::kShapeMismatch, "global_aggregate: expected g x g x C");
  const Var<T> tokens = reshape(x_ds, {x_ds.dim(0) * x_ds.dim(1), x_ds.dim(2)});
  return attn.forward(tokens, tokens);
}

template <class T>
Var<T> token_mlp(const Var<T>& g, const TokenMlpParams<T>& p) {
  const Var<T> h = p.norm.forward(g);
  if (p.kind == MlpKind::kNormal) return p.fc2.forward(gelu(p.fc1.forward(h)));
  check(g.dim(0) == p.fc2.in, ErrorCode::kShapeMismatch,
        "token_mlp: mix kind expects " + std::to_string(p.fc2.in) + " tokens, got " +
            std::to_string(g.dim(0)));
  return transpose(p.fc2.forward(transpose(p.fc1.forward(h))));
}

template <class T>
Var<T> fuse_global_tokens(const GlobalTokens<T>& g, const Var<T>& x_ga, double alpha,
                          const TokenMlpParams<T>& mlp) {
  check(x_ga.shape() == g.tokens.shape(), ErrorCode::kShapeMismatch,
        "fuse_global_tokens: X_ga " + shape_str(x_ga.shape()) + " does not match G " +
            shape_str(g.tokens.shape()));
  const Var<T> m = token_mlp(g.tokens, mlp);
  return add(scale(m, static_cast<T>(alpha)), scale(x_ga, static_cast<T>(1.0 - alpha)));
}

template <class T>
Var<T> fuse_global_tokens_msa(const GlobalTokens<T>& g, const Var<T>& source,
                              const MultiHeadAttention<T>& attn) {
  const std::array<Var<T>, 2> parts{g.tokens, source};
  const Var<T> kv = concat_rows<T>(parts);
  return attn.forward(g.tokens, kv).out;
}

template <class T>
AttentionOutput<T> global_broadcast(const Var<T>& x_img, const Var<T>& g_new,
                                    const MultiHeadAttention<T>& attn) {
  return attn.forward(x_img, g_new);
}

template <class T>
Var<T> dual_token_fusion(const Var<T>& x_local, const Var<T>& x_global) {
  return add(x_local, x_global);
}

template <class T>
Var<T> ffn(const Var<T>& x, const FfnParams<T>& p) {
  return add(x, p.fc2.forward(gelu(p.fc1.forward(p.norm.forward(x)))));
}

template <class T>
Var<T> bidim_attn(const Var<T>& x, const BiDimParams<T>& p) {
  const Var<T> s = sigmoid(p.spatial.forward(x));
  const Var<T> c = sigmoid(p.channel.forward(mean_rows(x)));
  return add(x, scale_cols(scale_rows(x, s), c));
}

template <class T>
BlockOutput<T> dual_token_block(const Var<T>& x, const GlobalTokens<T>& g, const BlockParams<T>& p) {
  const BlockConfig& cfg = p.cfg;
  check(x.value().rank() == 3 && x.dim(2) == cfg.channels, ErrorCode::kShapeMismatch,
        "dual_token_block: input " + shape_str(x.shape()) + " does not have " +
            std::to_string(cfg.channels) + " channels");
  check(g.count() == cfg.global_token_count() && g.channels() == cfg.channels, ErrorCode::kShapeMismatch,
        "dual_token_block: global tokens " + shape_str(g.tokens.shape()) + " do not match block config");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2), N = H * W;

  BlockOutput<T> out;
  BlockActivations<T>& a = out.acts;
  a.x_local = annotate("local", [&] {
    return cfg.local_kind == LocalKind::kConvEncoder ? conv_encoder(x, p.encoder)
                                                     : window_msa_local(x, p.window_attn, cfg.window_size);
  });
  const Var<T> img = reshape(a.x_local, {N, C});

  if (cfg.global_mode == GlobalMode::kNormalMsa) {
    a.g_new = annotate("fuse", [&] { return fuse_global_tokens_msa(g, img, p.fuse_attn); });
  } else {
    a.x_ds = annotate("downsample", [&] {
      return stepwise_downsample(a.x_local, p.downsample, cfg, &a.interpolated);
    });
    a.x_ga = annotate("aggregate", [&] { return global_aggregate(a.x_ds, p.attn).out; });
    a.g_new = annotate("fuse", [&] {
      return cfg.global_mode == GlobalMode::kPositionAwareSum
                 ? fuse_global_tokens(g, a.x_ga, cfg.alpha, p.token_mlp)
                 : fuse_global_tokens_msa(g, a.x_ga, p.fuse_attn);
    });
  }

  AttentionOutput<T> bc = annotate("broadcast", [&] { return global_broadcast(img, a.g_new, p.attn); });
  a.broadcast_attention = std::move(bc.attention);
  a.x_global = reshape(bc.out, {H, W, C});
  a.x_new = annotate("fusion", [&] { return dual_token_fusion(a.x_local, a.x_global); });

  Var<T> t = annotate("ffn", [&] { return ffn(reshape(a.x_new, {N, C}), p.ffn); });
  if (cfg.bidim_enabled) t = annotate("bidim", [&] { return bidim_attn(t, p.bidim); });
  out.x = reshape(t, {H, W, C});
  out.g = GlobalTokens<T>{add(g.tokens, a.g_new), g.rows, g.cols};
  return out;
}

#define DTVIT_INSTANTIATE(T)                                                                          \
  template struct ConvEncoderParams<T>;                                                               \
  template struct DownsampleParams<T>;                                                                \
  template struct TokenMlpParams<T>;                                                                  \
  template struct FfnParams<T>;                                                                       \
  template struct BiDimParams<T>;                                                                     \
  template struct BlockParams<T>;                                                                     \
  template Var<T> conv_encoder<T>(const Var<T>&, const ConvEncoderParams<T>&);                        \
  template Var<T> window_msa_local<T>(const Var<T>&, const MultiHeadAttention<T>&, std::size_t);      \
  template Var<T> stepwise_downsample<T>(const Var<T>&, const DownsampleParams<T>&, const BlockConfig&, \
                                         bool*);                                                      \
  template AttentionOutput<T> global_aggregate<T>(const Var<T>&, const MultiHeadAttention<T>&);       \
  template Var<T> token_mlp<T>(const Var<T>&, const TokenMlpParams<T>&);                              \
  template Var<T> fuse_global_tokens<T>(const GlobalTokens<T>&, const Var<T>&, double,                \
                                        const TokenMlpParams<T>&);                                    \
  template Var<T> fuse_global_tokens_msa<T>(const GlobalTokens<T>&, const Var<T>&,                    \
                                            const MultiHeadAttention<T>&);                            \
  template AttentionOutput<T> global_broadcast<T>(const Var<T>&, const Var<T>&,                       \
                                                  const MultiHeadAttention<T>&);                      \
  template Var<T> dual_token_fusion<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> ffn<T>(const Var<T>&, const FfnParams<T>&);                                         \
  template Var<T> bidim_attn<T>(const Var<T>&, const BiDimParams<T>&);                                \
  template BlockOutput<T> dual_token_block<T>(const Var<T>&, const GlobalTokens<T>&, const BlockParams<T>&);

DTVIT_INSTANTIATE(float)
DTVIT_INSTANTIATE(double)

}  // namespace dtvit
