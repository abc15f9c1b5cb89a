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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "epan/tensor.hpp"

// EPTN tensor dump: the 4 magic bytes "EPTN", a little-endian u32 rank, rank
// little-endian u64 dimensions, then the values as little-endian IEEE-754
// binary64 in row-major order. Single-precision tensors are widened on write.

namespace epan {

inline constexpr char kTensorMagic[4] = {'E', 'P', 'T', 'N'};

/// Number of bytes write_tensor produces for a tensor of this shape.
std::uint64_t encoded_size(const Shape& shape);

template <Real T>
void write_tensor(std::ostream& out, const Tensor<T>& tensor);

/// Reads one record. Throws FormatError carrying the byte offset of the
/// first bad field.
template <Real T>
Tensor<T> read_tensor(std::istream& in);

template <Real T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& tensor);
template <Real T>
Tensor<T> load_tensor(const std::filesystem::path& path);

}  // namespace epan
