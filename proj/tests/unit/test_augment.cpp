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

#include <gtest/gtest.h>

#include <random>

#include "epan/augment.hpp"
#include "epan/errors.hpp"

namespace epan {
namespace {

Tensord random_image(std::uint64_t seed, std::size_t h = 12, std::size_t w = 10) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensord t({3, h, w});
  for (auto& v : t.mutable_data()) v = u(rng);
  return t;
}

void expect_equal(const Tensord& a, const Tensord& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << "element " << i;
}

TEST(Augment, DisabledIsIdentity) {
  const Tensord x = random_image(1);
  for (std::uint64_t seed = 0; seed < 20; ++seed) expect_equal(augment(x, AugmentConfig::none(), seed), x);
}

TEST(Augment, ZeroProbabilitiesAreIdentity) {
  AugmentConfig c;
  c.flip_p = c.crop_p = c.erase_p = 0.0;
  const Tensord x = random_image(2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) expect_equal(augment(x, c, seed), x);
}

TEST(Augment, FlipIsAnInvolution) {
  AugmentConfig c = AugmentConfig::none();
  c.flip = true;
  c.flip_p = 1.0;
  const Tensord x = random_image(3);
  AugmentTrace tr;
  const Tensord once = augment(x, c, 7, &tr);
  EXPECT_TRUE(tr.flipped);
  EXPECT_EQ(once[0], x[9]);  // row 0, mirrored column
  expect_equal(augment(once, c, 8), x);
  expect_equal(flip_horizontal(flip_horizontal(x)), x);
}

TEST(Augment, CropIsAZeroFilledShift) {
  AugmentConfig c = AugmentConfig::none();
  c.crop = true;
  c.crop_p = 1.0;
  c.crop_pad = 3;
  const Tensord x = random_image(4);
  const long h = 12, w = 10;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    AugmentTrace tr;
    const Tensord y = augment(x, c, seed, &tr);
    ASSERT_TRUE(tr.cropped);
    ASSERT_LE(std::abs(tr.crop_dx), 3);
    ASSERT_LE(std::abs(tr.crop_dy), 3);
    for (long ch = 0; ch < 3; ++ch)
      for (long r = 0; r < h; ++r)
        for (long col = 0; col < w; ++col) {
          const long sr = r + tr.crop_dy, sc = col + tr.crop_dx;
          const double want = (sr < 0 || sr >= h || sc < 0 || sc >= w) ? 0.0 : x[(ch * h + sr) * w + sc];
          ASSERT_EQ(y[(ch * h + r) * w + col], want);
        }
  }
}

TEST(Augment, ErasedRegionHoldsTheFill) {
  AugmentConfig c = AugmentConfig::none();
  c.erase = true;
  c.erase_p = 1.0;
  c.erase_fill = {0.1, 0.2, 0.3};
  const std::size_t h = 32, w = 16;
  const Tensord x = random_image(5, h, w);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    AugmentTrace tr;
    const Tensord y = augment(x, c, seed, &tr);
    ASSERT_TRUE(tr.erased);
    const double area = static_cast<double>(tr.erase_height * tr.erase_width) / (h * w);
    EXPECT_GE(area, 0.01);
    EXPECT_LE(area, 0.25);
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t col = 0; col < w; ++col) {
          const bool inside = r >= tr.erase_top && r < tr.erase_top + tr.erase_height &&
                              col >= tr.erase_left && col < tr.erase_left + tr.erase_width;
          const std::size_t i = (ch * h + r) * w + col;
          ASSERT_EQ(y[i], inside ? c.erase_fill[ch] : x[i]);
        }
  }
}

TEST(Augment, DeterministicInTheSeed) {
  const AugmentConfig c;
  const Tensord x = random_image(6);
  expect_equal(augment(x, c, 42), augment(x, c, 42));
  bool differs = false;
  for (std::uint64_t s = 0; s < 10 && !differs; ++s) {
    const Tensord a = augment(x, c, s), b = augment(x, c, s + 100);
    for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i] != b[i];
  }
  EXPECT_TRUE(differs);
}

TEST(Augment, TogglingAStageKeepsTheOthersRandomness) {
  AugmentConfig all;
  all.flip_p = 1.0;
  AugmentConfig no_flip = all;
  no_flip.flip = false;
  const Tensord x = random_image(7);
  for (std::uint64_t s = 0; s < 10; ++s) {
    AugmentTrace a, b;
    augment(x, all, s, &a);
    augment(x, no_flip, s, &b);
    EXPECT_EQ(a.crop_dx, b.crop_dx);
    EXPECT_EQ(a.crop_dy, b.crop_dy);
    EXPECT_EQ(a.erase_top, b.erase_top);
  }
}

TEST(Augment, Validation) {
  AugmentConfig c;
  c.flip_p = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AugmentConfig{};
  c.erase_area_min = 0.3;
  c.erase_area_max = 0.2;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(augment(Tensord({4, 4}), AugmentConfig{}, 0), DimensionError);
}

TEST(ChannelMean, AveragesEveryPixel) {
  const std::vector<Tensord> imgs{Tensord({3, 1, 2}, {0, 1, 0.5, 0.5, 1, 1}),
                                  Tensord({3, 1, 2}, {1, 0, 0.5, 0.5, 0, 0})};
  const auto m = channel_mean<double>(imgs);
  EXPECT_DOUBLE_EQ(m[0], 0.5);
  EXPECT_DOUBLE_EQ(m[1], 0.5);
  EXPECT_DOUBLE_EQ(m[2], 0.5);
}

}  // namespace
}  // namespace epan
