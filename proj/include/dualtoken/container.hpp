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

// Little-endian named-tensor container shared by checkpoints and dataset
// caches. Values are held as double; f32 records round-trip exactly.
enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct StoredTensor {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<double> values;
};

inline constexpr char kContainerMagic[4] = {'D', 'T', 'V', 'T'};
inline constexpr std::uint32_t kContainerVersion = 1;

template <class T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::kF32 : DType::kF64;
}

template <class T>
StoredTensor to_stored(const std::string& name, const Tensor<T>& t) {
  return StoredTensor{name, dtype_of<T>(), t.shape(), std::vector<double>(t.data().begin(), t.data().end())};
}

template <class T>
Tensor<T> from_stored(const StoredTensor& s) {
  std::vector<T> v(s.values.begin(), s.values.end());
  return Tensor<T>(s.shape, std::move(v));
}

void write_container(const std::string& path, const std::vector<StoredTensor>& tensors);
std::vector<StoredTensor> read_container(const std::string& path);

// Linear lookup; throws kFormat when absent.
const StoredTensor& find_tensor(const std::vector<StoredTensor>& tensors, const std::string& name);

}  // namespace dtvit
