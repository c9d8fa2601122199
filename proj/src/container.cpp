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

#include "dualtoken/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dualtoken/error.hpp"

namespace dtvit {
namespace {

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

template <class U>
void put(std::ofstream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

class Reader {
 public:
  Reader(std::ifstream& in, const std::string& path) : in_(in), path_(path) {}

  template <class U>
  U get(const char* what) {
    U v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(U));
    if (in_.gcount() != static_cast<std::streamsize>(sizeof(U)))
      fail(ErrorCode::kFormat, path_ + ": truncated while reading " + what);
    return v;
  }

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      fail(ErrorCode::kFormat, path_ + ": truncated while reading " + what);
  }

 private:
  std::ifstream& in_;
  const std::string& path_;
};

}  // namespace

void write_container(const std::string& path, const std::vector<StoredTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path + " for writing");
  out.write(kContainerMagic, 4);
  put<std::uint32_t>(out, kContainerVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    check(t.name.size() <= 0xFFFF, ErrorCode::kInvalidArgument, "tensor name too long: " + t.name);
    check(t.shape.size() <= 0xFF, ErrorCode::kInvalidArgument, "tensor rank too large: " + t.name);
    check(shape_numel(t.shape) == t.values.size(), ErrorCode::kShapeMismatch,
          "tensor " + t.name + " has inconsistent value count");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
    if (t.dtype == DType::kF32) {
      for (double v : t.values) put<float>(out, static_cast<float>(v));
    } else {
      for (double v : t.values) put<double>(out, v);
    }
  }
  check(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path);
}

std::vector<StoredTensor> read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  Reader r(in, path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  check(std::memcmp(magic, kContainerMagic, 4) == 0, ErrorCode::kFormat, path + ": bad magic");
  const auto version = r.get<std::uint32_t>("version");
  check(version == kContainerVersion, ErrorCode::kFormat,
        path + ": unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<StoredTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    const auto len = r.get<std::uint16_t>("name length");
    t.name.resize(len);
    r.bytes(t.name.data(), len, "name");
    const auto code = r.get<std::uint8_t>("dtype");
    check(code <= 1, ErrorCode::kFormat, path + ": unknown dtype code " + std::to_string(code));
    t.dtype = static_cast<DType>(code);
    const auto rank = r.get<std::uint8_t>("rank");
    std::size_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>("dims");
      check(d > 0 && d < (1ull << 40), ErrorCode::kFormat, path + ": implausible extent in " + t.name);
      t.shape.push_back(d);
      n *= d;
    }
    check(n < (1ull << 34), ErrorCode::kFormat, path + ": implausible size for " + t.name);
    t.values.resize(n);
    if (t.dtype == DType::kF32) {
      for (auto& v : t.values) v = r.get<float>("data");
    } else {
      for (auto& v : t.values) v = r.get<double>("data");
    }
    tensors.push_back(std::move(t));
  }
  in.peek();
  check(in.eof(), ErrorCode::kFormat, path + ": trailing bytes after last tensor");
  return tensors;
}

const StoredTensor& find_tensor(const std::vector<StoredTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  fail(ErrorCode::kFormat, "missing tensor '" + name + "'");
}

}  // namespace dtvit
