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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "epan/affine.hpp"
#include "epan/market.hpp"
#include "epan/tensor.hpp"

// Synthetic misalignment benchmark. Every identity owns a procedural figure;
// every sample is that figure pushed through a known corruption warp, so the
// exact inverse warp is available as ground truth.

namespace epan {

enum class Corruption {
  none,
  /// Contractive warp: the figure shrinks into a cluttered background.
  background_excess,
  /// Translating warp: part of the figure leaves the frame, zero fill.
  partial_loss,
  /// Each sample draws one of the two corruptions with equal probability.
  mixed,
};

std::string_view to_string(Corruption c);
Corruption parse_corruption(std::string_view name);  // throws ConfigError

struct SynthSpec {
  std::size_t num_ids = 10;
  std::size_t per_id = 40;
  std::size_t height = 64;
  std::size_t width = 64;
  Corruption corruption = Corruption::mixed;
  double scale_min = 0.5;  // figure scale for background_excess
  double scale_max = 0.95;
  double shift_min = 0.1;  // normalized translation for partial_loss
  double shift_max = 0.4;
  double brightness = 0.15;  // camera 1 is scaled by 1 - b, camera 2 by 1 + b
  double train_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct SynthSample {
  std::string name;  // Market-style file name
  Tensord image;     // [3,H,W]
  int pid = 0;       // 1-based; the canonical figure index is pid - 1
  int camid = 1;
  Split split = Split::train;
  Corruption kind = Corruption::none;
  AffineParams theta;    // corruption: image = warp(brightness * figure, theta)
  AffineParams inverse;  // warp(image, inverse) restores the figure
  double brightness = 1.0;
};

struct SynthDataset {
  SynthSpec spec;
  std::vector<Tensord> canonical;  // one [3,H,W] figure per identity
  std::vector<SynthSample> samples;

  std::vector<const SynthSample*> split(Split which) const;
};

/// The clean figure of identity `id` (0-based), values in [0.05, 0.85].
Tensord canonical_figure(std::size_t id, const SynthSpec& spec);

/// Deterministic in `spec`. Per identity the first round(per_id *
/// train_fraction) samples are training images; of the rest the first image
/// of each camera is a query and the others form the gallery.
SynthDataset generate_synthetic(const SynthSpec& spec);

/// Writes bounding_box_train/, query/, bounding_box_test/ as PPM files, plus
/// thetas.csv (filename, theta1..6, inverse1..6) and counts.txt
/// (train,query,gallery).
void write_synthetic(const SynthDataset& data, const std::filesystem::path& root);

struct ThetaRecord {
  std::string filename;
  AffineParams theta;
  AffineParams inverse;
};
std::vector<ThetaRecord> read_thetas_csv(const std::filesystem::path& path);

/// Mean absolute difference between warp(image, inverse) and the
/// brightness-scaled figure, over pixels whose content survived the
/// corruption (pixels pushed out of frame by partial loss are excluded).
/// `valid_fraction` receives the share of pixels that were compared.
double recovery_error(const SynthSample& sample, const Tensord& figure,
                      double* valid_fraction = nullptr);

}  // namespace epan
