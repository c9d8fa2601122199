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

#include "dualtoken/data.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "dualtoken/container.hpp"
#include "dualtoken/error.hpp"
#include "dualtoken/layers.hpp"

namespace dtvit {

template <class T>
Tensor<T> SyntheticDataset::image(std::size_t i) const {
  check(i < size(), ErrorCode::kInvalidArgument, "dataset index out of range");
  const std::size_t px = static_cast<std::size_t>(side) * side * 3;
  const auto src = images.data().subspan(i * px, px);
  return Tensor<T>({static_cast<std::size_t>(side), static_cast<std::size_t>(side), 3},
                   std::vector<T>(src.begin(), src.end()));
}

template Tensor<float> SyntheticDataset::image<float>(std::size_t) const;
template Tensor<double> SyntheticDataset::image<double>(std::size_t) const;

PatternSpec pattern_spec(int classes, int side) {
  PatternSpec p;
  p.grid = 1;
  while (p.grid * p.grid < 2 * classes) ++p.grid;
  p.cell = side / p.grid;
  return p;
}

std::size_t class_cell(int k, int classes, int side) {
  const PatternSpec p = pattern_spec(classes, side);
  return static_cast<std::size_t>(k) * static_cast<std::size_t>(p.grid * p.grid / classes);
}

double class_orientation(int k, int classes) { return std::numbers::pi * k / classes; }

namespace {

void paint_grating(float* img, int side, const PatternSpec& p, std::size_t cell, double theta, double phase,
                   double polarity) {
  const int r0 = static_cast<int>(cell) / p.grid * p.cell;
  const int c0 = static_cast<int>(cell) % p.grid * p.cell;
  const double kx = std::cos(theta) * 2.0 * std::numbers::pi / p.period;
  const double ky = std::sin(theta) * 2.0 * std::numbers::pi / p.period;
  for (int y = 0; y < p.cell; ++y)
    for (int x = 0; x < p.cell; ++x) {
      const float v = static_cast<float>(polarity * std::cos(kx * x + ky * y + phase));
      float* px = img + (static_cast<std::size_t>(r0 + y) * side + (c0 + x)) * 3;
      for (int c = 0; c < 3; ++c) px[c] += v;
    }
}

}  // namespace

SyntheticDataset gen_synthetic(std::uint64_t seed, std::size_t n, int classes, int side) {
  check(classes >= 2, ErrorCode::kInvalidArgument, "gen_synthetic: need at least 2 classes");
  check(side > 0 && side % 8 == 0, ErrorCode::kInvalidArgument,
        "gen_synthetic: side " + std::to_string(side) + " must be a positive multiple of 8");
  check(n > 0, ErrorCode::kInvalidArgument, "gen_synthetic: empty dataset");
  const PatternSpec p = pattern_spec(classes, side);
  check(p.cell >= 4, ErrorCode::kInvalidArgument,
        "gen_synthetic: side " + std::to_string(side) + " too small for " + std::to_string(classes) + " classes");

  SyntheticDataset d;
  d.seed = seed;
  d.classes = classes;
  d.side = side;
  const std::size_t s = static_cast<std::size_t>(side);
  const std::size_t px = s * s * 3;
  d.images = Tensor<float>({n, s, s, 3});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % static_cast<std::size_t>(classes));
    d.labels[i] = k;
    std::mt19937_64 rng(mix_seed(seed, "sample" + std::to_string(i)));
    std::normal_distribution<double> noise(0.0, p.noise);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    float* img = d.images.data().data() + i * px;
    for (std::size_t j = 0; j < px; ++j) img[j] = static_cast<float>(noise(rng));
    auto polarity = [&] { return (rng() & 1) ? 1.0 : -1.0; };
    paint_grating(img, side, p, class_cell(k, classes, side), class_orientation(k, classes), phase(rng),
                  polarity());
    if (classes >= 3) {
      // Distractor: orientation of class a placed in the cell of class b.
      std::uniform_int_distribution<int> pick(0, classes - 1);
      int b = k;
      while (b == k) b = pick(rng);
      int a = k;
      while (a == k || a == b) a = pick(rng);
      paint_grating(img, side, p, class_cell(b, classes, side), class_orientation(a, classes), phase(rng),
                    polarity());
    }
  }
  return d;
}

void save_dataset(const SyntheticDataset& d, const std::string& path) {
  std::vector<StoredTensor> ts;
  ts.push_back(to_stored("images", d.images));
  Tensor<float> labels({d.labels.size()});
  for (std::size_t i = 0; i < d.labels.size(); ++i) labels[i] = static_cast<float>(d.labels[i]);
  ts.push_back(to_stored("labels", labels));
  Tensor<float> meta({4});
  meta[0] = static_cast<float>(d.classes);
  meta[1] = static_cast<float>(d.side);
  meta[2] = static_cast<float>(d.seed >> 32);
  meta[3] = static_cast<float>(d.seed & 0xFFFFFFFFu);
  // Seed halves exceed f32 precision; store them as f64.
  StoredTensor m = to_stored("meta", meta);
  m.dtype = DType::kF64;
  m.values[2] = static_cast<double>(d.seed >> 32);
  m.values[3] = static_cast<double>(d.seed & 0xFFFFFFFFu);
  ts.push_back(std::move(m));
  write_container(path, ts);
}

SyntheticDataset load_dataset(const std::string& path) {
  const auto ts = read_container(path);
  const StoredTensor& img = find_tensor(ts, "images");
  const StoredTensor& lab = find_tensor(ts, "labels");
  const StoredTensor& meta = find_tensor(ts, "meta");
  check(img.shape.size() == 4 && img.shape[1] == img.shape[2] && img.shape[3] == 3, ErrorCode::kFormat,
        path + ": images must be n x S x S x 3");
  check(lab.shape.size() == 1 && lab.shape[0] == img.shape[0], ErrorCode::kFormat,
        path + ": labels do not match images");
  check(meta.values.size() == 4, ErrorCode::kFormat, path + ": bad meta tensor");
  SyntheticDataset d;
  d.images = from_stored<float>(img);
  d.classes = static_cast<int>(meta.values[0]);
  d.side = static_cast<int>(meta.values[1]);
  d.seed = (static_cast<std::uint64_t>(meta.values[2]) << 32) | static_cast<std::uint64_t>(meta.values[3]);
  check(d.side == static_cast<int>(img.shape[1]), ErrorCode::kFormat, path + ": side mismatch");
  for (double v : lab.values) {
    check(v >= 0 && v < d.classes && v == std::floor(v), ErrorCode::kFormat, path + ": bad label value");
    d.labels.push_back(static_cast<int>(v));
  }
  return d;
}

}  // namespace dtvit
