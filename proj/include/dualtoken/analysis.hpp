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

#include "dualtoken/model.hpp"

namespace dtvit {

struct CostEntry {
  std::string path;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CostReport {
  std::vector<CostEntry> entries;
  int resolution = 0;  // 0 when only parameters were counted

  std::uint64_t total_params() const;
  std::uint64_t total_macs() const;
};

// One entry per layer (parameter name minus its last component).
template <class T>
CostReport count_params(const Model<T>& m);

// Analytic multiply-accumulate count of one forward pass at resolution^2.
CostReport count_flops(const ModelConfig& cfg, int resolution);

// Runs a forward pass and returns what the primitive counters recorded.
template <class T>
std::uint64_t instrumented_macs(const Model<T>& m, int resolution);

// Plain-text breakdown, one line per entry plus a totals line.
std::string format_report(const CostReport& r);

enum class QueryKind { kIndex, kMean, kAll };

struct QuerySelect {
  QueryKind kind = QueryKind::kMean;
  std::size_t index = 0;
};

struct AttentionMapExport {
  std::size_t block = 0;  // flat block index across stages
  QuerySelect query;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Tensor<double>> maps;  // rows x cols each
};

// block < 0 selects the last block.
template <class T>
AttentionMapExport extract_attention_map(const Model<T>& m, const Tensor<T>& image, int block,
                                         QuerySelect query);

// Maps from an N x n head-averaged broadcast matrix.
template <class T>
AttentionMapExport attention_maps_from(const Tensor<T>& broadcast, std::size_t rows, std::size_t cols,
                                       QuerySelect query);

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

// Largest k cells, descending; equal values keep row-major order.
std::vector<Cell> top_k_cells(const Tensor<double>& map, std::size_t k);

enum class HeatmapFormat { kCsv, kPgm };

void export_heatmap(const Tensor<double>& map, const std::string& path, HeatmapFormat format);
std::string heatmap_csv(const Tensor<double>& map);
std::string heatmap_pgm(const Tensor<double>& map);
Tensor<double> parse_heatmap_csv(const std::string& text);
Tensor<double> read_heatmap_csv(const std::string& path);

}  // namespace dtvit
