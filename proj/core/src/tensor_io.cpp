// Copyright 2026 The EPAN Authors. All Rights Reserved.
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

#include "epan/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "epan/errors.hpp"

namespace epan {

namespace {

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<unsigned char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* field) {
  const auto offset = static_cast<long long>(in.tellg());
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw FormatError(std::string("EPTN: truncated ") + field + " at byte " +
                      std::to_string(offset));
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

std::uint64_t encoded_size(const Shape& shape) {
  return 4 + 4 + 8 * shape.size() + 8 * element_count(shape);
}

template <Real T>
void write_tensor(std::ostream& out, const Tensor<T>& tensor) {
  out.write(kTensorMagic, 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto d : tensor.shape()) put_le<std::uint64_t>(out, d);
  for (T v : tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(double(v)));
  if (!out) throw FormatError("EPTN: write failed");
}

template <Real T>
Tensor<T> read_tensor(std::istream& in) {
  const auto start = static_cast<long long>(in.tellg());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw FormatError("EPTN: bad magic at byte " + std::to_string(start));
  }
  const auto rank = get_le<std::uint32_t>(in, "rank");
  if (rank > 16) {
    throw FormatError("EPTN: implausible rank " + std::to_string(rank) + " at byte " +
                      std::to_string(start + 4));
  }
  Shape shape(rank);
  for (auto& d : shape) {
    const auto pos = static_cast<long long>(in.tellg());
    d = get_le<std::uint64_t>(in, "dimension");
    if (d == 0 || d > (std::uint64_t{1} << 40)) {
      throw FormatError("EPTN: bad dimension at byte " + std::to_string(pos));
    }
  }
  std::vector<T> values(element_count(shape));
  for (auto& v : values) v = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(in, "payload")));
  return Tensor<T>(std::move(shape), std::move(values));
}

template <Real T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(out, tensor);
}

template <Real T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensor<T>(in);
}

template void write_tensor(std::ostream&, const Tensor<float>&);
template void write_tensor(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor(std::istream&);
template Tensor<double> read_tensor(std::istream&);
template void save_tensor(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor(const std::filesystem::path&);
template Tensor<double> load_tensor(const std::filesystem::path&);

}  // namespace epan
