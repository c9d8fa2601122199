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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualtoken/tensor.hpp"

namespace dtvit {

// Each class owns one grating orientation and one grid cell. A sample shows
// its class grating in its class cell plus a distractor: a foreign grating in
// a foreign cell. Gratings have random phase and polarity, so neither pixel
// intensities nor texture alone nor position alone identify the class.
struct SyntheticDataset {
  Tensor<float> images;      // n x S x S x 3
  std::vector<int> labels;   // round-robin, in [0, classes)
  std::uint64_t seed = 0;
  int classes = 0;
  int side = 0;

  std::size_t size() const { return labels.size(); }
  template <class T>
  Tensor<T> image(std::size_t i) const;
};

struct PatternSpec {
  int grid = 0;        // cells per side
  int cell = 0;        // cell side in pixels
  double period = 6.0; // grating period in pixels
  double noise = 0.1;  // background noise std
};

PatternSpec pattern_spec(int classes, int side);
// Cell index (row-major in the grid) and orientation in radians of class k.
std::size_t class_cell(int k, int classes, int side);
double class_orientation(int k, int classes);

SyntheticDataset gen_synthetic(std::uint64_t seed, std::size_t n, int classes, int side);

void save_dataset(const SyntheticDataset& d, const std::string& path);
SyntheticDataset load_dataset(const std::string& path);

}  // namespace dtvit
