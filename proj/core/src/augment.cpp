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

#include "epan/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "epan/errors.hpp"

namespace epan {

namespace {

bool probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

void AugmentConfig::validate() const {
  if (!probability(flip_p) || !probability(crop_p) || !probability(erase_p)) {
    throw ConfigError("augmentation probabilities must lie in [0, 1]");
  }
  if (!(erase_area_min > 0.0 && erase_area_min <= erase_area_max && erase_area_max < 1.0)) {
    throw ConfigError("erase area range must satisfy 0 < min <= max < 1");
  }
  if (!(erase_aspect_min > 0.0 && erase_aspect_min <= 1.0)) {
    throw ConfigError("erase aspect minimum must lie in (0, 1]");
  }
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.flip = c.crop = c.erase = false;
  return c;
}

template <Real T>
Tensor<T> flip_horizontal(const Tensor<T>& image) {
  if (image.rank() != 3) throw DimensionError("flip_horizontal expects [C,H,W]");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor<T> out(image.shape());
  auto src = image.data();
  auto dst = out.mutable_data();
  for (std::size_t p = 0; p < c * h; ++p) {
    for (std::size_t x = 0; x < w; ++x) dst[p * w + x] = src[p * w + (w - 1 - x)];
  }
  return out;
}

template <Real T>
Tensor<T> augment(const Tensor<T>& image, const AugmentConfig& config, std::uint64_t seed,
                  AugmentTrace* trace) {
  if (image.rank() != 3) throw DimensionError("augment expects [C,H,W]");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentTrace local;
  AugmentTrace& tr = trace ? *trace : local;
  tr = AugmentTrace{};

  // Every draw happens whether or not its stage is enabled, so toggling one
  // stage leaves the randomness of the others unchanged.
  const bool do_flip = unit(rng) < config.flip_p && config.flip;
  const bool do_crop = unit(rng) < config.crop_p && config.crop;
  const long pad = static_cast<long>(config.crop_pad);
  std::uniform_int_distribution<long> offset(-pad, pad);
  const long dx = offset(rng);
  const long dy = offset(rng);

  Tensor<T> out = do_flip ? flip_horizontal(image) : image.detach();
  tr.flipped = do_flip;

  if (do_crop && (dx != 0 || dy != 0)) {
    Tensor<T> shifted(image.shape(), T(0));
    auto src = out.data();
    auto dst = shifted.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        const long sy = static_cast<long>(y) + dy;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        for (std::size_t x = 0; x < w; ++x) {
          const long sx = static_cast<long>(x) + dx;
          if (sx < 0 || sx >= static_cast<long>(w)) continue;
          dst[(ch * h + y) * w + x] = src[(ch * h + static_cast<std::size_t>(sy)) * w +
                                          static_cast<std::size_t>(sx)];
        }
      }
    }
    out = shifted;
  }
  tr.cropped = do_crop;
  tr.crop_dx = do_crop ? dx : 0;
  tr.crop_dy = do_crop ? dy : 0;

  if (unit(rng) < config.erase_p && config.erase) {
    const double area = static_cast<double>(h * w);
    std::uniform_real_distribution<double> area_frac(config.erase_area_min, config.erase_area_max);
    std::uniform_real_distribution<double> log_aspect(std::log(config.erase_aspect_min),
                                                      -std::log(config.erase_aspect_min));
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double target = area * area_frac(rng);
      const double aspect = std::exp(log_aspect(rng));
      const auto eh = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
      const auto ew = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
      if (eh == 0 || ew == 0 || eh >= h || ew >= w) continue;
      const std::size_t top = std::uniform_int_distribution<std::size_t>(0, h - eh)(rng);
      const std::size_t left = std::uniform_int_distribution<std::size_t>(0, w - ew)(rng);
      auto dst = out.mutable_data();
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T fill = static_cast<T>(config.erase_fill[std::min<std::size_t>(ch, 2)]);
        for (std::size_t y = top; y < top + eh; ++y) {
          for (std::size_t x = left; x < left + ew; ++x) dst[(ch * h + y) * w + x] = fill;
        }
      }
      tr.erased = true;
      tr.erase_top = top;
      tr.erase_left = left;
      tr.erase_height = eh;
      tr.erase_width = ew;
      break;
    }
  }
  return out;
}

template <Real T>
std::array<double, 3> channel_mean(std::span<const Tensor<T>> images) {
  std::array<double, 3> total{0, 0, 0};
  std::size_t pixels = 0;
  for (const auto& img : images) {
    if (img.rank() != 3 || img.dim(0) != 3) throw DimensionError("channel_mean expects [3,H,W]");
    const std::size_t plane = img.dim(1) * img.dim(2);
    auto d = img.data();
    for (std::size_t ch = 0; ch < 3; ++ch) {
      for (std::size_t i = 0; i < plane; ++i) total[ch] += static_cast<double>(d[ch * plane + i]);
    }
    pixels += plane;
  }
  if (pixels == 0) return {0, 0, 0};
  for (auto& t : total) t /= static_cast<double>(pixels);
  return total;
}

#define EPAN_INSTANTIATE_AUGMENT(T)                                                        \
  template Tensor<T> flip_horizontal<T>(const Tensor<T>&);                                 \
  template Tensor<T> augment<T>(const Tensor<T>&, const AugmentConfig&, std::uint64_t,     \
                                AugmentTrace*);                                            \
  template std::array<double, 3> channel_mean<T>(std::span<const Tensor<T>>);

EPAN_INSTANTIATE_AUGMENT(float)
EPAN_INSTANTIATE_AUGMENT(double)

}  // namespace epan
