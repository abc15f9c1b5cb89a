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

#include "epan/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "epan/errors.hpp"
#include "epan/image_io.hpp"

namespace epan {

namespace {

using Rgb = std::array<double, 3>;

constexpr double kEdge = 0.12;  // soft edge width in normalized units
constexpr double kMaskThreshold = 0.999;

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

// Coverage in [0,1] from a signed distance (negative inside).
double coverage(double signed_distance) {
  const double t = std::clamp(0.5 - signed_distance / kEdge, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double box_distance(double u, double v, double cx, double cy, double hw, double hh) {
  return std::max(std::abs(u - cx) - hw, std::abs(v - cy) - hh);
}

Rgb random_color(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return {d(rng), d(rng), d(rng)};
}

Rgb blend(const Rgb& under, const Rgb& over, double alpha) {
  return {under[0] + alpha * (over[0] - under[0]), under[1] + alpha * (over[1] - under[1]),
          under[2] + alpha * (over[2] - under[2])};
}

// Smooth random field used as background clutter.
Tensord clutter(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Rgb base = random_color(rng, 0.2, 0.6);
  struct Wave {
    double fx, fy, phase;
    Rgb amp;
  };
  std::array<Wave, 4> waves;
  for (auto& wv : waves) {
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const double freq = 0.5 + 2.0 * unit(rng);  // cycles per normalized unit
    wv = {freq * std::cos(angle), freq * std::sin(angle), 2.0 * std::numbers::pi * unit(rng),
          random_color(rng, -0.1, 0.1)};
  }
  Tensord out({3, h, w});
  auto d = out.mutable_data();
  for (std::size_t y = 0; y < h; ++y) {
    const double v = normalized_coord(y, h);
    for (std::size_t x = 0; x < w; ++x) {
      const double u = normalized_coord(x, w);
      Rgb c = base;
      for (const auto& wv : waves) {
        const double s = std::sin(std::numbers::pi * (wv.fx * u + wv.fy * v) + wv.phase);
        for (int ch = 0; ch < 3; ++ch) c[ch] += wv.amp[ch] * s;
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        d[(ch * h + y) * w + x] = std::clamp(c[ch], 0.05, 0.85);
      }
    }
  }
  return out;
}

Tensord scaled(const Tensord& image, double factor) {
  Tensord out = image.detach();
  for (auto& v : out.mutable_data()) v *= factor;
  return out;
}

}  // namespace

std::string_view to_string(Corruption c) {
  switch (c) {
    case Corruption::none: return "none";
    case Corruption::background_excess: return "background_excess";
    case Corruption::partial_loss: return "partial_loss";
    case Corruption::mixed: return "mixed";
  }
  return "?";
}

Corruption parse_corruption(std::string_view name) {
  for (auto c : {Corruption::none, Corruption::background_excess, Corruption::partial_loss,
                 Corruption::mixed}) {
    if (name == to_string(c)) return c;
  }
  throw ConfigError("unknown corruption '" + std::string(name) + "'");
}

void SynthSpec::validate() const {
  if (num_ids < 2 || per_id < 2) throw ConfigError("synthetic data needs num_ids >= 2 and per_id >= 2");
  if (height < 2 || width < 2) throw ConfigError("synthetic canvas must be at least 2x2");
  if (!(0.0 < scale_min && scale_min <= scale_max && scale_max <= 1.0)) {
    throw ConfigError("scale range must satisfy 0 < min <= max <= 1");
  }
  if (!(0.0 <= shift_min && shift_min <= shift_max && shift_max < 2.0)) {
    throw ConfigError("shift range must satisfy 0 <= min <= max < 2");
  }
  if (!(brightness >= 0.0 && brightness < 1.0)) throw ConfigError("brightness must lie in [0, 1)");
  if (!(train_fraction >= 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in [0, 1)");
  }
}

std::vector<const SynthSample*> SynthDataset::split(Split which) const {
  std::vector<const SynthSample*> out;
  for (const auto& s : samples) {
    if (s.split == which) out.push_back(&s);
  }
  return out;
}

Tensord canonical_figure(std::size_t id, const SynthSpec& spec) {
  auto rng = seeded(spec.seed, id, 0x5eed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Rgb background = random_color(rng, 0.25, 0.6);
  const Rgb skin = random_color(rng, 0.45, 0.8);
  const Rgb shirt = random_color(rng, 0.05, 0.85);
  const Rgb stripe = random_color(rng, 0.05, 0.85);
  const Rgb pants = random_color(rng, 0.05, 0.85);
  const double stripe_freq = 1.5 + 2.0 * unit(rng);
  const double stripe_phase = 2.0 * std::numbers::pi * unit(rng);
  const bool vertical_stripes = unit(rng) < 0.5;
  const double torso_half = 0.32 + 0.13 * unit(rng);
  const double head_x = 0.1 * (unit(rng) - 0.5);
  const double leg_gap = 0.03 + 0.05 * unit(rng);

  const std::size_t h = spec.height, w = spec.width;
  Tensord out({3, h, w});
  auto d = out.mutable_data();
  for (std::size_t y = 0; y < h; ++y) {
    const double v = normalized_coord(y, h);
    for (std::size_t x = 0; x < w; ++x) {
      const double u = normalized_coord(x, w);
      Rgb c = background;
      const double leg_l = box_distance(u, v, -0.17 - leg_gap / 2, 0.55, 0.15, 0.4);
      const double leg_r = box_distance(u, v, 0.17 + leg_gap / 2, 0.55, 0.15, 0.4);
      c = blend(c, pants, coverage(std::min(leg_l, leg_r)));
      const double along = vertical_stripes ? u : v;
      const double mix = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * stripe_freq * along + stripe_phase);
      const Rgb cloth = blend(shirt, stripe, mix);
      c = blend(c, cloth, coverage(box_distance(u, v, 0.0, -0.17, torso_half, 0.33)));
      const double du = (u - head_x) / 0.16, dv = (v + 0.7) / 0.17;
      c = blend(c, skin, coverage((std::sqrt(du * du + dv * dv) - 1.0) * 0.16));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        d[(ch * h + y) * w + x] = std::clamp(c[ch], 0.05, 0.85);
      }
    }
  }
  return out;
}

SynthDataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  SynthDataset data;
  data.spec = spec;
  const std::size_t h = spec.height, w = spec.width;
  const auto n_train = static_cast<std::size_t>(
      std::lround(static_cast<double>(spec.per_id) * spec.train_fraction));
  const Tensord ones({1, h, w}, 1.0);
  for (std::size_t id = 0; id < spec.num_ids; ++id) {
    data.canonical.push_back(canonical_figure(id, spec));
  }
  for (std::size_t id = 0; id < spec.num_ids; ++id) {
    std::array<bool, 2> has_query{false, false};
    for (std::size_t i = 0; i < spec.per_id; ++i) {
      auto rng = seeded(spec.seed, id, 1 + i);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      SynthSample s;
      s.pid = static_cast<int>(id) + 1;
      s.camid = 1 + static_cast<int>(i % 2);
      s.brightness = s.camid == 1 ? 1.0 - spec.brightness : 1.0 + spec.brightness;
      if (i < n_train) {
        s.split = Split::train;
      } else if (!has_query[i % 2]) {
        s.split = Split::query;
        has_query[i % 2] = true;
      } else {
        s.split = Split::gallery;
      }
      s.kind = spec.corruption;
      // Draw the mixed choice unconditionally so the corruption parameters of
      // a sample do not depend on the configured kind.
      const bool pick_excess = unit(rng) < 0.5;
      if (s.kind == Corruption::mixed) {
        s.kind = pick_excess ? Corruption::background_excess : Corruption::partial_loss;
      }
      const Tensord figure = scaled(data.canonical[id], s.brightness);
      if (s.kind == Corruption::background_excess) {
        const double scale = spec.scale_min + (spec.scale_max - spec.scale_min) * unit(rng);
        const double room = 1.0 - scale;
        const double cx = room * (2.0 * unit(rng) - 1.0);
        const double cy = room * (2.0 * unit(rng) - 1.0);
        s.theta = AffineParams::scale_translate(1.0 / scale, 1.0 / scale, -cx / scale, -cy / scale);
        s.inverse = AffineParams::scale_translate(scale, scale, cx, cy);
        const Tensord placed = warp_image(figure, s.theta, h, w);
        const Tensord footprint = warp_image(ones, s.theta, h, w);
        const Tensord back = scaled(clutter(rng, h, w), s.brightness);
        Tensord img({3, h, w});
        auto out = img.mutable_data();
        auto p = placed.data();
        auto m = footprint.data();
        auto b = back.data();
        for (std::size_t k = 0; k < out.size(); ++k) {
          out[k] = p[k] + (1.0 - m[k % (h * w)]) * b[k];
        }
        s.image = img;
      } else if (s.kind == Corruption::partial_loss) {
        const double shift = spec.shift_min + (spec.shift_max - spec.shift_min) * unit(rng);
        const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        const bool horizontal = unit(rng) < 0.5;
        const double tx = horizontal ? sign * shift : 0.0;
        const double ty = horizontal ? 0.0 : sign * shift;
        s.theta = AffineParams::scale_translate(1.0, 1.0, tx, ty);
        s.inverse = AffineParams::scale_translate(1.0, 1.0, -tx, -ty);
        s.image = warp_image(figure, s.theta, h, w);
      } else {
        s.image = figure;
      }
      s.name = format_market_name({s.pid, s.camid, 1, static_cast<int>(i), 0}, ".ppm");
      data.samples.push_back(std::move(s));
    }
  }
  return data;
}

void write_synthetic(const SynthDataset& data, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const std::pair<Split, const char*> dirs[] = {
      {Split::train, "bounding_box_train"}, {Split::query, "query"}, {Split::gallery, "bounding_box_test"}};
  for (const auto& [split, dir] : dirs) fs::create_directories(root / dir);
  std::ofstream csv(root / "thetas.csv");
  if (!csv) throw ConfigError("cannot write " + (root / "thetas.csv").string());
  csv << "filename,theta1,theta2,theta3,theta4,theta5,theta6,"
         "inverse1,inverse2,inverse3,inverse4,inverse5,inverse6\n";
  std::size_t counts[3] = {0, 0, 0};
  char buf[32];
  for (const auto& s : data.samples) {
    const char* dir = s.split == Split::train ? "bounding_box_train"
                      : s.split == Split::query ? "query"
                                                : "bounding_box_test";
    ++counts[static_cast<int>(s.split)];
    write_ppm(root / dir / s.name, s.image);
    csv << s.name;
    for (const auto* p : {&s.theta, &s.inverse}) {
      for (double t : p->theta) {
        std::snprintf(buf, sizeof buf, ",%.17g", t);
        csv << buf;
      }
    }
    csv << '\n';
  }
  std::ofstream(root / "counts.txt") << counts[0] << ',' << counts[1] << ',' << counts[2] << '\n';
}

std::vector<ThetaRecord> read_thetas_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<ThetaRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::istringstream row(line);
    ThetaRecord r;
    std::string field;
    std::getline(row, r.filename, ',');
    for (int k = 0; k < 12; ++k) {
      if (!std::getline(row, field, ',')) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 13 fields");
      }
      try {
        (k < 6 ? r.theta.theta[k] : r.inverse.theta[k - 6]) = std::stod(field);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                          field + "'");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

double recovery_error(const SynthSample& sample, const Tensord& figure, double* valid_fraction) {
  const std::size_t h = figure.dim(1), w = figure.dim(2);
  const Tensord recovered = warp_image(sample.image, sample.inverse, h, w);
  // Content that survived the corruption: the corruption footprint carried
  // back through the inverse warp.
  const Tensord ones({1, h, w}, 1.0);
  const Tensord mask =
      warp_image(warp_image(ones, sample.theta, h, w), sample.inverse, h, w);
  auto r = recovered.data();
  auto f = figure.data();
  auto m = mask.data();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (m[k % (h * w)] < kMaskThreshold) continue;
    total += std::abs(r[k] - sample.brightness * f[k]);
    ++count;
  }
  if (valid_fraction) *valid_fraction = static_cast<double>(count) / static_cast<double>(r.size());
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace epan
