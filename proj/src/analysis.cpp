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

#include "dualtoken/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dtvit {
namespace {

using u64 = std::uint64_t;

u64 attention_macs(u64 nq, u64 nk, u64 c) {
  // q and out projections over queries, k and v over keys, then QK^T and AV.
  return 2 * nq * c * c + 2 * nk * c * c + 2 * nq * nk * c;
}

std::string layer_of(const std::string& param) {
  const auto dot = param.rfind('.');
  return dot == std::string::npos ? param : param.substr(0, dot);
}

}  // namespace

std::uint64_t CostReport::total_params() const {
  u64 n = 0;
  for (const auto& e : entries) n += e.params;
  return n;
}

std::uint64_t CostReport::total_macs() const {
  u64 n = 0;
  for (const auto& e : entries) n += e.macs;
  return n;
}

template <class T>
CostReport count_params(const Model<T>& m) {
  CostReport r;
  for (const auto& p : m.params) {
    const std::string layer = layer_of(p.name);
    if (r.entries.empty() || r.entries.back().path != layer) r.entries.push_back({layer, 0, 0});
    r.entries.back().params += p.var.size();
  }
  return r;
}

CostReport count_flops(const ModelConfig& cfg, int resolution) {
  validate(cfg);
  validate_resolution(cfg, resolution);
  CostReport r;
  r.resolution = resolution;
  auto add = [&](const std::string& path, u64 macs) { r.entries.push_back({path, 0, macs}); };

  const u64 c1 = static_cast<u64>(cfg.stages[0].channels);
  const u64 half = c1 / 2;
  const u64 s = static_cast<u64>(resolution);
  add("stem.conv0", (s / 2) * (s / 2) * 9 * 3 * half);
  add("stem.conv1", (s / 4) * (s / 4) * 9 * half * half);
  add("stem.conv2", (s / 8) * (s / 8) * 9 * half * c1);

  for (std::size_t st = 0; st < 3; ++st) {
    const BlockConfig b = block_config(cfg, st);
    const std::string stage = "stage" + std::to_string(st + 1);
    const u64 h = s / static_cast<u64>(cfg.stages[st].stride);
    const u64 N = h * h, C = b.channels, g = b.token_grid, n = b.global_token_count();
    if (st > 0) {
      const u64 cin = static_cast<u64>(cfg.stages[st - 1].channels);
      add(stage + ".merge.proj", N * 4 * cin * C);
      add(stage + ".g_proj", n * cin * C);
    }
    for (int k = 0; k < cfg.stages[st].blocks; ++k) {
      const std::string blk = stage + ".block" + std::to_string(k);
      if (b.local_kind == LocalKind::kConvEncoder) {
        add(blk + ".encoder.dw", N * b.dw_kernel * b.dw_kernel * C);
        add(blk + ".encoder.pw1", N * C * 4 * C);
        add(blk + ".encoder.pw2", N * 4 * C * C);
      } else {
        const u64 w2 = b.window_size * b.window_size;
        add(blk + ".window_attn", (N / w2) * attention_macs(w2, w2, C));
      }
      if (b.global_mode == GlobalMode::kNormalMsa) {
        add(blk + ".fuse_attn", attention_macs(n, n + N, C));
      } else {
        if (!b.skip_downsample && b.ds_kind == DownsampleKind::kStepWise) {
          u64 cur = h / 2;
          for (std::size_t m = 0; m < b.ds_steps; ++m) {
            add(blk + ".downsample.conv" + std::to_string(m), cur * cur * 9 * C * C);
            cur /= 2;
          }
        }
        add(blk + ".attn.aggregate", attention_macs(g * g, g * g, C));
        if (b.global_mode == GlobalMode::kPositionAwareSum) {
          if (b.mlp_kind == MlpKind::kNormal) {
            add(blk + ".token_mlp.fc1", n * C * b.mlp_ratio * C);
            add(blk + ".token_mlp.fc2", n * b.mlp_ratio * C * C);
          } else {
            add(blk + ".token_mlp.channel_fc", n * C * C);
            add(blk + ".token_mlp.token_fc", C * n * n);
          }
        } else {
          add(blk + ".fuse_attn", attention_macs(n, n + g * g, C));
        }
      }
      add(blk + ".attn.broadcast", attention_macs(N, n, C));
      add(blk + ".ffn.fc1", N * C * b.ffn_ratio * C);
      add(blk + ".ffn.fc2", N * b.ffn_ratio * C * C);
      if (b.bidim_enabled) {
        add(blk + ".bidim.spatial", N * C);
        add(blk + ".bidim.channel", C * C);
      }
    }
  }
  const u64 c3 = static_cast<u64>(cfg.stages[2].channels);
  u64 feat = c3;
  if (cfg.neck_dim > 0) {
    feat = static_cast<u64>(cfg.neck_dim);
    add("head.neck", c3 * feat);
  }
  add("head.fc", feat * static_cast<u64>(cfg.num_classes));
  return r;
}

template <class T>
std::uint64_t instrumented_macs(const Model<T>& m, int resolution) {
  check(resolution > 0, ErrorCode::kInvalidArgument, "resolution must be positive");
  const std::size_t s = static_cast<std::size_t>(resolution);
  Tensor<T> img({s, s, 3});
  auto d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(std::sin(0.37 * static_cast<double>(i)));
  NoGradScope<T> no_grad;
  const u64 before = kernels::mac_count();
  forward(m, Var<T>(std::move(img)));
  return kernels::mac_count() - before;
}

std::string format_report(const CostReport& r) {
  // a params-only or macs-only report drops the empty column
  const bool show_params = r.total_params() > 0 || r.total_macs() == 0;
  const bool show_macs = r.total_macs() > 0;
  std::ostringstream os;
  char line[256];
  for (const auto& e : r.entries) {
    std::snprintf(line, sizeof line, "%-44s", e.path.c_str());
    os << line;
    if (show_params) {
      std::snprintf(line, sizeof line, show_macs ? " params=%-10llu" : " params=%llu",
                    static_cast<unsigned long long>(e.params));
      os << line;
    }
    if (show_macs) {
      std::snprintf(line, sizeof line, " macs=%llu", static_cast<unsigned long long>(e.macs));
      os << line;
    }
    os << '\n';
  }
  os << "total";
  if (show_params) {
    std::snprintf(line, sizeof line, " params=%llu (%.3fM)", static_cast<unsigned long long>(r.total_params()),
                  r.total_params() / 1e6);
    os << line;
  }
  if (show_macs) {
    std::snprintf(line, sizeof line, " macs=%llu (%.3fG)", static_cast<unsigned long long>(r.total_macs()),
                  r.total_macs() / 1e9);
    os << line;
  }
  if (r.resolution > 0) os << " resolution=" << r.resolution;
  os << '\n';
  return os.str();
}

template <class T>
AttentionMapExport attention_maps_from(const Tensor<T>& broadcast, std::size_t rows, std::size_t cols,
                                       QuerySelect query) {
  check(broadcast.rank() == 2 && broadcast.dim(1) == rows * cols, ErrorCode::kShapeMismatch,
        "attention map: broadcast matrix " + shape_str(broadcast.shape()) + " does not have " +
            std::to_string(rows * cols) + " columns");
  const std::size_t nq = broadcast.dim(0), n = rows * cols;
  AttentionMapExport e;
  e.query = query;
  e.rows = rows;
  e.cols = cols;
  auto row_map = [&](std::size_t q) {
    Tensor<double> m({rows, cols});
    for (std::size_t j = 0; j < n; ++j) m[j] = broadcast.at(q, j);
    return m;
  };
  switch (query.kind) {
    case QueryKind::kIndex:
      check(query.index < nq, ErrorCode::kInvalidArgument,
            "query index " + std::to_string(query.index) + " out of range for " + std::to_string(nq) +
                " image tokens");
      e.maps.push_back(row_map(query.index));
      break;
    case QueryKind::kAll:
      for (std::size_t q = 0; q < nq; ++q) e.maps.push_back(row_map(q));
      break;
    case QueryKind::kMean: {
      Tensor<double> m({rows, cols});
      for (std::size_t q = 0; q < nq; ++q)
        for (std::size_t j = 0; j < n; ++j) m[j] += broadcast.at(q, j);
      for (auto& v : m.data()) v /= static_cast<double>(nq);
      e.maps.push_back(std::move(m));
      break;
    }
  }
  return e;
}

template <class T>
AttentionMapExport extract_attention_map(const Model<T>& m, const Tensor<T>& image, int block,
                                         QuerySelect query) {
  ForwardResult<T> r;
  {
    NoGradScope<T> no_grad;
    r = forward(m, Var<T>(image));
  }
  const std::size_t nb = r.acts.size();
  const std::size_t idx = block < 0 ? nb - 1 : static_cast<std::size_t>(block);
  check(idx < nb, ErrorCode::kInvalidArgument,
        "block index " + std::to_string(block) + " out of range for " + std::to_string(nb) + " blocks");
  AttentionMapExport e = attention_maps_from(r.acts[idx].broadcast_attention, m.g_rows, m.g_cols, query);
  e.block = idx;
  return e;
}

std::vector<Cell> top_k_cells(const Tensor<double>& map, std::size_t k) {
  check(map.rank() == 2, ErrorCode::kShapeMismatch, "top_k_cells: expected a 2-D map");
  const std::size_t cols = map.dim(1);
  std::vector<std::size_t> order(map.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return map[a] > map[b] || (map[a] == map[b] && a < b); });
  std::vector<Cell> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back({order[i] / cols, order[i] % cols, map[order[i]]});
  return out;
}

std::string heatmap_csv(const Tensor<double>& map) {
  check(map.rank() == 2, ErrorCode::kShapeMismatch, "heatmap: expected a 2-D map");
  check(map.all_finite(), ErrorCode::kNonFinite, "heatmap: non-finite value");
  std::string out;
  char buf[32];
  for (std::size_t r = 0; r < map.dim(0); ++r) {
    for (std::size_t c = 0; c < map.dim(1); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", map.at(r, c));
      if (c) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string heatmap_pgm(const Tensor<double>& map) {
  check(map.rank() == 2, ErrorCode::kShapeMismatch, "heatmap: expected a 2-D map");
  check(map.all_finite(), ErrorCode::kNonFinite, "heatmap: non-finite value");
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const double mn = *lo, range = *hi - *lo;
  std::ostringstream os;
  os << "P2\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
  for (std::size_t r = 0; r < map.dim(0); ++r) {
    for (std::size_t c = 0; c < map.dim(1); ++c) {
      const long v = range > 0 ? std::lround((map.at(r, c) - mn) / range * 255.0) : 0;
      os << (c ? " " : "") << v;
    }
    os << '\n';
  }
  return os.str();
}

void export_heatmap(const Tensor<double>& map, const std::string& path, HeatmapFormat format) {
  const std::string text = format == HeatmapFormat::kCsv ? heatmap_csv(map) : heatmap_pgm(map);
  std::ofstream out(path, std::ios::trunc);
  check(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path + " for writing");
  out << text;
  check(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path);
}

Tensor<double> parse_heatmap_csv(const std::string& text) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t n = 0;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        fail(ErrorCode::kFormat, "heatmap csv: bad value '" + cell + "'");
      }
      check(used == cell.size(), ErrorCode::kFormat, "heatmap csv: bad value '" + cell + "'");
      values.push_back(v);
      ++n;
    }
    check(rows == 0 || n == cols, ErrorCode::kFormat, "heatmap csv: ragged rows");
    cols = n;
    ++rows;
  }
  check(rows > 0, ErrorCode::kFormat, "heatmap csv: empty");
  return Tensor<double>({rows, cols}, std::move(values));
}

Tensor<double> read_heatmap_csv(const std::string& path) {
  std::ifstream in(path);
  check(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_heatmap_csv(ss.str());
}

#define DTVIT_INSTANTIATE(T)                                                                         \
  template CostReport count_params<T>(const Model<T>&);                                              \
  template std::uint64_t instrumented_macs<T>(const Model<T>&, int);                                 \
  template AttentionMapExport attention_maps_from<T>(const Tensor<T>&, std::size_t, std::size_t,     \
                                                     QuerySelect);                                   \
  template AttentionMapExport extract_attention_map<T>(const Model<T>&, const Tensor<T>&, int, QuerySelect);

DTVIT_INSTANTIATE(float)
DTVIT_INSTANTIATE(double)

}  // namespace dtvit
