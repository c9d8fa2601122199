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

// Brute-force reference implementations. Each one is written from the
// definition, loop by loop, and shares no code with the library kernels.

#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "dualtoken/layers.hpp"
#include "dualtoken/tensor.hpp"

namespace oracle {

using dtvit::Shape;
using dtvit::Tensor;

template <class T>
Tensor<T> random(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> nd(0.0, stddev);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(nd(rng));
  return t;
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += (long double)a.at(i, p) * b.at(p, j);
      c.at(i, j) = static_cast<T>(acc);
    }
  return c;
}

// x: H x W x Cin, w: kh x kw x Cin/groups x Cout
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, std::size_t stride,
                 std::size_t pad, std::size_t groups) {
  const long H = x.dim(0), W = x.dim(1), cin = x.dim(2);
  const long kh = w.dim(0), kw = w.dim(1), cg = w.dim(2), cout = w.dim(3);
  const long oh = (H + 2 * (long)pad - kh) / (long)stride + 1;
  const long ow = (W + 2 * (long)pad - kw) / (long)stride + 1;
  const long og = cout / (long)groups;
  (void)cin;
  Tensor<T> y({(std::size_t)oh, (std::size_t)ow, (std::size_t)cout});
  for (long i = 0; i < oh; ++i)
    for (long j = 0; j < ow; ++j)
      for (long co = 0; co < cout; ++co) {
        long double acc = bias ? (long double)(*bias)[co] : 0.0L;
        const long g = co / og;
        for (long a = 0; a < kh; ++a)
          for (long b = 0; b < kw; ++b) {
            const long yy = i * (long)stride + a - (long)pad;
            const long xx = j * (long)stride + b - (long)pad;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
            for (long ci = 0; ci < cg; ++ci) {
              const T xv = x.at(yy, xx, g * cg + ci);
              const T wv = w[((a * kw + b) * cg + ci) * cout + co];
              acc += (long double)xv * wv;
            }
          }
        y.at(i, j, co) = static_cast<T>(acc);
      }
  return y;
}

template <class T>
Tensor<T> avgpool(const Tensor<T>& x, std::size_t k) {
  const std::size_t oh = x.dim(0) / k, ow = x.dim(1) / k, c = x.dim(2);
  Tensor<T> y({oh, ow, c});
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b) acc += x.at(i * k + a, j * k + b, ch);
        y.at(i, j, ch) = static_cast<T>(acc / double(k * k));
      }
  return y;
}

// Half-pixel sample position, clamped to the valid range.
inline void source(std::size_t o, std::size_t out, std::size_t in, std::size_t& lo, std::size_t& hi,
                   double& frac) {
  double s = (o + 0.5) * double(in) / double(out) - 0.5;
  if (s < 0) s = 0;
  if (s > double(in - 1)) s = double(in - 1);
  lo = (std::size_t)std::floor(s);
  hi = lo + 1 < in ? lo + 1 : in - 1;
  frac = s - double(lo);
}

template <class T>
Tensor<T> resize(const Tensor<T>& x, std::size_t oh, std::size_t ow) {
  const std::size_t c = x.dim(2);
  Tensor<T> y({oh, ow, c});
  for (std::size_t i = 0; i < oh; ++i) {
    std::size_t y0, y1;
    double fy;
    source(i, oh, x.dim(0), y0, y1, fy);
    for (std::size_t j = 0; j < ow; ++j) {
      std::size_t x0, x1;
      double fx;
      source(j, ow, x.dim(1), x0, x1, fx);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const long double top = (1 - fx) * (long double)x.at(y0, x0, ch) + fx * (long double)x.at(y0, x1, ch);
        const long double bot = (1 - fx) * (long double)x.at(y1, x0, ch) + fx * (long double)x.at(y1, x1, ch);
        y.at(i, j, ch) = static_cast<T>((1 - fy) * top + fy * bot);
      }
    }
  }
  return y;
}

template <class T>
std::vector<long double> affine_row(const Tensor<T>& x, std::size_t r, const dtvit::Linear<T>& lin) {
  const auto& w = lin.weight.value();
  std::vector<long double> out(lin.out, 0.0L);
  for (std::size_t o = 0; o < lin.out; ++o) {
    long double acc = lin.bias.defined() ? (long double)lin.bias.value()[o] : 0.0L;
    for (std::size_t i = 0; i < lin.in; ++i) acc += (long double)x.at(r, i) * w.at(i, o);
    out[o] = acc;
  }
  return out;
}

// One query at a time, one head at a time.
template <class T>
void mhsa(const dtvit::MultiHeadAttention<T>& attn, const Tensor<T>& xq, const Tensor<T>& xkv,
          Tensor<T>& out, Tensor<T>& weights) {
  const std::size_t nq = xq.dim(0), nk = xkv.dim(0), c = attn.dim, h = attn.heads, d = c / h;
  std::vector<std::vector<long double>> k(nk), v(nk);
  for (std::size_t j = 0; j < nk; ++j) {
    k[j] = affine_row(xkv, j, attn.k_proj);
    v[j] = affine_row(xkv, j, attn.v_proj);
  }
  out = Tensor<T>({nq, c});
  weights = Tensor<T>({nq, nk});
  for (std::size_t i = 0; i < nq; ++i) {
    const auto q = affine_row(xq, i, attn.q_proj);
    Tensor<T> merged({1, c});
    for (std::size_t hh = 0; hh < h; ++hh) {
      std::vector<long double> s(nk);
      long double mx = -1e300L;
      for (std::size_t j = 0; j < nk; ++j) {
        long double dot = 0;
        for (std::size_t t = 0; t < d; ++t) dot += q[hh * d + t] * k[j][hh * d + t];
        s[j] = dot / std::sqrt((long double)d);
        mx = std::max(mx, s[j]);
      }
      long double z = 0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t t = 0; t < d; ++t) {
        long double acc = 0;
        for (std::size_t j = 0; j < nk; ++j) acc += s[j] / z * v[j][hh * d + t];
        merged.at(0, hh * d + t) = static_cast<T>(acc);
      }
      for (std::size_t j = 0; j < nk; ++j) weights.at(i, j) += static_cast<T>(s[j] / z / h);
    }
    const auto o = affine_row(merged, 0, attn.out_proj);
    for (std::size_t t = 0; t < c; ++t) out.at(i, t) = static_cast<T>(o[t]);
  }
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// Relative to the magnitude of the reference, floored at 1.
template <class T>
double max_rel_diff(const Tensor<T>& got, const Tensor<T>& want) {
  if (got.shape() != want.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double d = std::abs(double(got[i]) - double(want[i]));
    m = std::max(m, d / std::max(1.0, std::abs(double(want[i]))));
  }
  return m;
}

}  // namespace oracle
