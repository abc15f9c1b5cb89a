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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "epan/tensor.hpp"

namespace epan {

/// Training-time augmentation: horizontal flip, zero-pad then random crop
/// back to the original size, and random erasing. Each stage has its own
/// switch and probability.
struct AugmentConfig {
  bool flip = true;
  double flip_p = 0.5;
  bool crop = true;
  double crop_p = 1.0;
  std::size_t crop_pad = 10;
  bool erase = true;
  double erase_p = 0.5;
  double erase_area_min = 0.02;  // fraction of the image area
  double erase_area_max = 0.20;
  double erase_aspect_min = 0.3;  // aspect drawn log-uniformly in [min, 1/min]
  /// Per-channel fill for erased pixels, normally the training-set mean.
  std::array<double, 3> erase_fill{0.5, 0.5, 0.5};

  void validate() const;  // throws ConfigError
  static AugmentConfig none();
};

/// What one augment() call did, for inspection in tests.
struct AugmentTrace {
  bool flipped = false;
  bool cropped = false;
  long crop_dx = 0;  // source shift in pixels, in [-pad, pad]
  long crop_dy = 0;
  bool erased = false;
  std::size_t erase_top = 0, erase_left = 0, erase_height = 0, erase_width = 0;
};

/// Augments one [C,H,W] image. The result depends only on the image, the
/// config and `seed`.
template <Real T>
Tensor<T> augment(const Tensor<T>& image, const AugmentConfig& config, std::uint64_t seed,
                  AugmentTrace* trace = nullptr);

/// Horizontal mirror of a [C,H,W] image.
template <Real T>
Tensor<T> flip_horizontal(const Tensor<T>& image);

/// Per-channel mean over a set of [3,H,W] images.
template <Real T>
std::array<double, 3> channel_mean(std::span<const Tensor<T>> images);

}  // namespace epan
