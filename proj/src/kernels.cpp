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

#include "dualtoken/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dtvit::kernels {
namespace {

thread_local std::uint64_t t_macs = 0;

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  check(s.size() == rank, ErrorCode::kShapeMismatch,
        std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
}

}  // namespace

std::uint64_t mac_count() { return t_macs; }
void reset_mac_count() { t_macs = 0; }
void add_macs(std::uint64_t n) { t_macs += n; }

template <class T>
T gelu(T x) {
  const double v = static_cast<double>(x);
  return static_cast<T>(0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)));
}

template <class T>
T gelu_grad(T x) {
  const double v = static_cast<double>(x);
  const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return static_cast<T>(cdf + v * pdf);
}

template <class T>
T sigmoid(T x) {
  const double v = static_cast<double>(x);
  if (v >= 0) return static_cast<T>(1.0 / (1.0 + std::exp(-v)));
  const double e = std::exp(v);
  return static_cast<T>(e / (1.0 + e));
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul lhs");
  require_rank(b.shape(), 2, "matmul rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  check(b.dim(0) == k, ErrorCode::kShapeMismatch,
        "matmul inner extents differ: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  Tensor<T> out({m, n});
  std::vector<double> acc(n);
  const T* A = a.data().data();
  const T* B = b.data().data();
  T* C = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const T* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < n; ++j) C[i * n + j] = static_cast<T>(acc[j]);
  }
  return out;
}

template <class T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul_tn lhs");
  require_rank(b.shape(), 2, "matmul_tn rhs");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  check(b.dim(0) == k, ErrorCode::kShapeMismatch, "matmul_tn inner extents differ");
  std::vector<double> acc(m * n, 0.0);
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      const double av = A[p * m + i];
      if (av == 0.0) continue;
      double* row = acc.data() + i * n;
      const T* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m * n; ++i) out[i] = static_cast<T>(acc[i]);
  return out;
}

template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul_nt lhs");
  require_rank(b.shape(), 2, "matmul_nt rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  check(b.dim(1) == k, ErrorCode::kShapeMismatch, "matmul_nt inner extents differ");
  Tensor<T> out({m, n});
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(A[i * k + p]) * B[j * k + p];
      out[i * n + j] = static_cast<T>(acc);
    }
  }
  return out;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

Shape conv2d_output_shape(const Shape& x, const Shape& w, const Conv2dSpec& spec) {
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const std::size_t cin = x[2], cout = w[3];
  check(spec.groups > 0 && spec.stride > 0, ErrorCode::kInvalidArgument,
        "conv2d: groups and stride must be positive");
  check(cin % spec.groups == 0 && cout % spec.groups == 0, ErrorCode::kShapeMismatch,
        "conv2d: channels " + std::to_string(cin) + "->" + std::to_string(cout) +
            " not divisible by groups " + std::to_string(spec.groups));
  check(w[2] == cin / spec.groups, ErrorCode::kShapeMismatch,
        "conv2d: weight " + shape_str(w) + " incompatible with input " + shape_str(x) +
            " and groups " + std::to_string(spec.groups));
  const std::size_t ph = x[0] + 2 * spec.padding, pw = x[1] + 2 * spec.padding;
  check(ph >= w[0] && pw >= w[1], ErrorCode::kShapeMismatch, "conv2d: kernel larger than padded input");
  return {(ph - w[0]) / spec.stride + 1, (pw - w[1]) / spec.stride + 1, cout};
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const Conv2dSpec& spec) {
  const Shape os = conv2d_output_shape(x.shape(), w.shape(), spec);
  const std::size_t H = x.dim(0), W = x.dim(1), cin = x.dim(2);
  const std::size_t kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  const std::size_t g = spec.groups, cig = cin / g, cog = cout / g;
  if (bias) check(bias->size() == cout, ErrorCode::kShapeMismatch, "conv2d: bias length mismatch");
  Tensor<T> out(os);
  std::vector<double> acc(cout);
  const T* X = x.data().data();
  const T* Wt = w.data().data();
  const bool depthwise = cig == 1 && cog == 1;
  for (std::size_t oy = 0; oy < os[0]; ++oy) {
    for (std::size_t ox = 0; ox < os[1]; ++ox) {
      for (std::size_t c = 0; c < cout; ++c) acc[c] = bias ? static_cast<double>((*bias)[c]) : 0.0;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) -
                                  static_cast<std::ptrdiff_t>(spec.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) -
                                    static_cast<std::ptrdiff_t>(spec.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
          const T* xrow = X + (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * cin;
          const T* wk = Wt + (ky * kw + kx) * cig * cout;
          if (depthwise) {
            for (std::size_t c = 0; c < cout; ++c) acc[c] += static_cast<double>(xrow[c]) * wk[c];
            continue;
          }
          for (std::size_t gi = 0; gi < g; ++gi) {
            for (std::size_t ci = 0; ci < cig; ++ci) {
              const double xv = xrow[gi * cig + ci];
              if (xv == 0.0) continue;
              const T* wrow = wk + ci * cout + gi * cog;
              double* arow = acc.data() + gi * cog;
              for (std::size_t co = 0; co < cog; ++co) arow[co] += xv * wrow[co];
            }
          }
        }
      }
      T* orow = out.data().data() + (oy * os[1] + ox) * cout;
      for (std::size_t c = 0; c < cout; ++c) orow[c] = static_cast<T>(acc[c]);
    }
  }
  return out;
}

template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Conv2dSpec& spec,
                     const Tensor<T>& grad_out, Tensor<T>* grad_x, Tensor<T>* grad_w,
                     Tensor<T>* grad_bias) {
  const Shape os = conv2d_output_shape(x.shape(), w.shape(), spec);
  check(grad_out.shape() == os, ErrorCode::kShapeMismatch, "conv2d backward: grad shape mismatch");
  const std::size_t H = x.dim(0), W = x.dim(1), cin = x.dim(2);
  const std::size_t kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  const std::size_t g = spec.groups, cig = cin / g, cog = cout / g;
  std::vector<double> gx(grad_x ? x.size() : 0, 0.0);
  std::vector<double> gw(grad_w ? w.size() : 0, 0.0);
  std::vector<double> gb(grad_bias ? cout : 0, 0.0);
  const T* X = x.data().data();
  const T* Wt = w.data().data();
  const T* GO = grad_out.data().data();
  for (std::size_t oy = 0; oy < os[0]; ++oy) {
    for (std::size_t ox = 0; ox < os[1]; ++ox) {
      const T* go = GO + (oy * os[1] + ox) * cout;
      if (grad_bias)
        for (std::size_t c = 0; c < cout; ++c) gb[c] += go[c];
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) -
                                  static_cast<std::ptrdiff_t>(spec.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) -
                                    static_cast<std::ptrdiff_t>(spec.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
          const std::size_t xoff = (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * cin;
          const std::size_t woff = (ky * kw + kx) * cig * cout;
          for (std::size_t gi = 0; gi < g; ++gi) {
            for (std::size_t ci = 0; ci < cig; ++ci) {
              const std::size_t xi = xoff + gi * cig + ci;
              const std::size_t wbase = woff + ci * cout + gi * cog;
              double sx = 0.0;
              const double xv = X[xi];
              for (std::size_t co = 0; co < cog; ++co) {
                const double gv = go[gi * cog + co];
                if (grad_x) sx += gv * Wt[wbase + co];
                if (grad_w) gw[wbase + co] += xv * gv;
              }
              if (grad_x) gx[xi] += sx;
            }
          }
        }
      }
    }
  }
  if (grad_x) {
    *grad_x = Tensor<T>(x.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) (*grad_x)[i] = static_cast<T>(gx[i]);
  }
  if (grad_w) {
    *grad_w = Tensor<T>(w.shape());
    for (std::size_t i = 0; i < gw.size(); ++i) (*grad_w)[i] = static_cast<T>(gw[i]);
  }
  if (grad_bias) {
    *grad_bias = Tensor<T>({cout});
    for (std::size_t i = 0; i < cout; ++i) (*grad_bias)[i] = static_cast<T>(gb[i]);
  }
}

template <class T>
Tensor<T> avgpool2d(const Tensor<T>& x, std::size_t k) {
  require_rank(x.shape(), 3, "avgpool2d");
  check(k > 0, ErrorCode::kInvalidArgument, "avgpool2d: kernel must be positive");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  check(H % k == 0 && W % k == 0, ErrorCode::kShapeMismatch,
        "avgpool2d: extent " + shape_str(x.shape()) + " not divisible by " + std::to_string(k));
  const std::size_t oh = H / k, ow = W / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  Tensor<T> out({oh, ow, C});
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx) acc += x.at(oy * k + dy, ox * k + dx, c);
        out.at(oy, ox, c) = static_cast<T>(acc * inv);
      }
  return out;
}

template <class T>
Tensor<T> avgpool2d_backward(const Shape& x_shape, std::size_t k, const Tensor<T>& grad_out) {
  Tensor<T> gx(x_shape);
  const std::size_t C = x_shape[2];
  const double inv = 1.0 / static_cast<double>(k * k);
  for (std::size_t y = 0; y < x_shape[0]; ++y)
    for (std::size_t x = 0; x < x_shape[1]; ++x)
      for (std::size_t c = 0; c < C; ++c)
        gx.at(y, x, c) = static_cast<T>(grad_out.at(y / k, x / k, c) * inv);
  return gx;
}

template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    double eps, LayerNormCache* cache) {
  check(x.rank() >= 1, ErrorCode::kShapeMismatch, "layernorm: rank 0 input");
  const std::size_t C = x.shape().back();
  check(C >= 1, ErrorCode::kShapeMismatch, "layernorm: empty channel axis");
  check(gamma.size() == C && beta.size() == C, ErrorCode::kShapeMismatch,
        "layernorm: affine parameters do not match channel extent " + std::to_string(C));
  const std::size_t rows = x.size() / C;
  Tensor<T> out(x.shape());
  if (cache) {
    cache->mean.assign(rows, 0.0);
    cache->rstd.assign(rows, 0.0);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * C;
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) mean += xr[c];
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = xr[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(C);
    const double rstd = 1.0 / std::sqrt(var + eps);
    T* yr = out.data().data() + r * C;
    for (std::size_t c = 0; c < C; ++c)
      yr[c] = static_cast<T>((xr[c] - mean) * rstd * gamma[c] + beta[c]);
    if (cache) {
      cache->mean[r] = mean;
      cache->rstd[r] = rstd;
    }
  }
  return out;
}

template <class T>
void layernorm_backward(const Tensor<T>& x, const Tensor<T>& gamma, const LayerNormCache& cache,
                        const Tensor<T>& grad_out, Tensor<T>* grad_x, Tensor<T>* grad_gamma,
                        Tensor<T>* grad_beta) {
  const std::size_t C = x.shape().back();
  const std::size_t rows = x.size() / C;
  std::vector<double> gg(C, 0.0), gb(C, 0.0), xhat(C), dxhat(C);
  if (grad_x) *grad_x = Tensor<T>(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * C;
    const T* gr = grad_out.data().data() + r * C;
    const double mean = cache.mean[r], rstd = cache.rstd[r];
    double sum_d = 0.0, sum_dx = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      xhat[c] = (xr[c] - mean) * rstd;
      dxhat[c] = static_cast<double>(gr[c]) * gamma[c];
      gg[c] += static_cast<double>(gr[c]) * xhat[c];
      gb[c] += gr[c];
      sum_d += dxhat[c];
      sum_dx += dxhat[c] * xhat[c];
    }
    if (!grad_x) continue;
    const double inv_c = 1.0 / static_cast<double>(C);
    T* gxr = grad_x->data().data() + r * C;
    for (std::size_t c = 0; c < C; ++c)
      gxr[c] = static_cast<T>(rstd * (dxhat[c] - sum_d * inv_c - xhat[c] * sum_dx * inv_c));
  }
  if (grad_gamma) {
    *grad_gamma = Tensor<T>({C});
    for (std::size_t c = 0; c < C; ++c) (*grad_gamma)[c] = static_cast<T>(gg[c]);
  }
  if (grad_beta) {
    *grad_beta = Tensor<T>({C});
    for (std::size_t c = 0; c < C; ++c) (*grad_beta)[c] = static_cast<T>(gb[c]);
  }
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  check(x.rank() >= 1, ErrorCode::kShapeMismatch, "softmax: rank 0 input");
  check(x.all_finite(), ErrorCode::kNonFinite, "softmax: non-finite input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  Tensor<T> out(x.shape());
  std::vector<double> e(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * n;
    double mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, static_cast<double>(xr[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = std::exp(xr[j] - mx);
      sum += e[j];
    }
    T* yr = out.data().data() + r * n;
    for (std::size_t j = 0; j < n; ++j) yr[j] = static_cast<T>(e[j] / sum);
  }
  return out;
}

template <class T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  const std::size_t n = y.shape().back();
  const std::size_t rows = y.size() / n;
  Tensor<T> gx(y.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* yr = y.data().data() + r * n;
    const T* gr = grad_out.data().data() + r * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(yr[j]) * gr[j];
    T* xr = gx.data().data() + r * n;
    for (std::size_t j = 0; j < n; ++j) xr[j] = static_cast<T>(yr[j] * (gr[j] - dot));
  }
  return gx;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double frac;
};

// Half-pixel source coordinate, clamped to the valid range.
std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    double frac = src - static_cast<double>(i0);
    if (i1 == i0) frac = 0.0;
    taps[d] = {i0, i1, frac};
  }
  return taps;
}

}  // namespace

template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x.shape(), 3, "bilinear_resize");
  check(out_h > 0 && out_w > 0, ErrorCode::kInvalidArgument, "bilinear_resize: zero output extent");
  const std::size_t C = x.dim(2);
  const auto ty = resize_taps(x.dim(0), out_h);
  const auto tx = resize_taps(x.dim(1), out_w);
  Tensor<T> out({out_h, out_w, C});
  for (std::size_t oy = 0; oy < out_h; ++oy)
    for (std::size_t ox = 0; ox < out_w; ++ox)
      for (std::size_t c = 0; c < C; ++c) {
        const double a = x.at(ty[oy].i0, tx[ox].i0, c), b = x.at(ty[oy].i0, tx[ox].i1, c);
        const double d = x.at(ty[oy].i1, tx[ox].i0, c), e = x.at(ty[oy].i1, tx[ox].i1, c);
        // lerp form keeps constant fields exact
        const double top = a + tx[ox].frac * (b - a);
        const double bot = d + tx[ox].frac * (e - d);
        out.at(oy, ox, c) = static_cast<T>(top + ty[oy].frac * (bot - top));
      }
  return out;
}

template <class T>
Tensor<T> bilinear_resize_backward(const Shape& x_shape, const Tensor<T>& grad_out) {
  const std::size_t C = x_shape[2];
  const std::size_t out_h = grad_out.dim(0), out_w = grad_out.dim(1);
  const auto ty = resize_taps(x_shape[0], out_h);
  const auto tx = resize_taps(x_shape[1], out_w);
  std::vector<double> acc(shape_numel(x_shape), 0.0);
  auto idx = [&](std::size_t y, std::size_t x, std::size_t c) { return (y * x_shape[1] + x) * C + c; };
  for (std::size_t oy = 0; oy < out_h; ++oy)
    for (std::size_t ox = 0; ox < out_w; ++ox)
      for (std::size_t c = 0; c < C; ++c) {
        const double g = grad_out.at(oy, ox, c);
        const double fy = ty[oy].frac, fx = tx[ox].frac;
        acc[idx(ty[oy].i0, tx[ox].i0, c)] += g * (1 - fy) * (1 - fx);
        acc[idx(ty[oy].i0, tx[ox].i1, c)] += g * (1 - fy) * fx;
        acc[idx(ty[oy].i1, tx[ox].i0, c)] += g * fy * (1 - fx);
        acc[idx(ty[oy].i1, tx[ox].i1, c)] += g * fy * fx;
      }
  Tensor<T> gx(x_shape);
  for (std::size_t i = 0; i < acc.size(); ++i) gx[i] = static_cast<T>(acc[i]);
  return gx;
}

#define DTVIT_INSTANTIATE(T)                                                                      \
  template T gelu<T>(T);                                                                          \
  template T gelu_grad<T>(T);                                                                     \
  template T sigmoid<T>(T);                                                                       \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> matmul_tn<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                              \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,              \
                               const Conv2dSpec&);                                                \
  template void conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Conv2dSpec&,         \
                                   const Tensor<T>&, Tensor<T>*, Tensor<T>*, Tensor<T>*);         \
  template Tensor<T> avgpool2d<T>(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> avgpool2d_backward<T>(const Shape&, std::size_t, const Tensor<T>&);          \
  template Tensor<T> layernorm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double,   \
                                  LayerNormCache*);                                               \
  template void layernorm_backward<T>(const Tensor<T>&, const Tensor<T>&, const LayerNormCache&,  \
                                      const Tensor<T>&, Tensor<T>*, Tensor<T>*, Tensor<T>*);      \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                \
  template Tensor<T> softmax_backward<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> bilinear_resize<T>(const Tensor<T>&, std::size_t, std::size_t);              \
  template Tensor<T> bilinear_resize_backward<T>(const Shape&, const Tensor<T>&);

DTVIT_INSTANTIATE(float)
DTVIT_INSTANTIATE(double)

}  // namespace dtvit::kernels
