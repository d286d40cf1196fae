// Copyright 2026 The WaBERT Authors
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

#include "wabert/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts unsupported");

namespace wabert {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
constexpr std::uint32_t kMaxRank = 8;

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw CorruptFile("tensor stream truncated");
  return value;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) write_pod<std::uint64_t>(os, d);
  for (double v : *t.data) write_pod<double>(os, v);
  if (!os) throw IoFailure("tensor write failed");
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw CorruptFile("bad tensor magic");
  }
  const std::uint32_t rank = read_pod<std::uint32_t>(is);
  if (rank == 0 || rank > kMaxRank) {
    throw CorruptFile("implausible tensor rank " + std::to_string(rank));
  }
  std::vector<std::size_t> shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t d = read_pod<std::uint64_t>(is);
    if (d == 0 || d > (1ull << 32)) {
      throw CorruptFile("implausible tensor dimension");
    }
    shape[i] = static_cast<std::size_t>(d);
  }
  Tensor t = Tensor::zeros(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = read_pod<double>(is);
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoFailure("cannot open " + path + " for writing");
  write_tensor(os, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoFailure("cannot open " + path);
  return read_tensor(is);
}

}  // namespace wabert
