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

#include <filesystem>
#include <string>

#include "epan/tensor.hpp"

// Portable anymap images. Binary PPM (P6) and PGM (P5) with maxval <= 255 are
// read; pixel values are scaled to [0,1] and stored channel-major.

namespace epan {

/// Loads a P6 image as [3,H,W]; a P5 image is replicated to three channels.
/// Throws FormatError carrying the byte offset of the first malformed field.
Tensord load_image(const std::filesystem::path& path);
Tensord decode_image(const std::string& bytes, const std::string& origin = "<memory>");

/// Writes [3,H,W] (values clamped to [0,1], rounded to 8 bits) as P6.
void write_ppm(const std::filesystem::path& path, const Tensord& image);
std::string encode_ppm(const Tensord& image);

/// Writes [H,W] or [1,H,W] as P5.
void write_pgm(const std::filesystem::path& path, const Tensord& image);

/// Resamples [C,H,W] to [C,height,width] through the affine sampler with the
/// identity map, so image corners land on corners.
Tensord resize(const Tensord& image, std::size_t height, std::size_t width);

}  // namespace epan
