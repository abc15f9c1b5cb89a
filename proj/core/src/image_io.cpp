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

#include "epan/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "epan/affine.hpp"
#include "epan/errors.hpp"

namespace epan {

namespace {

class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  [[noreturn]] void fail(const std::string& what) const { fail_at(pos_, what); }

  [[noreturn]] void fail_at(std::size_t offset, const std::string& what) const {
    throw FormatError(origin_ + ": " + what + " at byte " + std::to_string(offset));
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    last_start_ = start;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > 1'000'000) fail_at(start, std::string("oversized ") + field);
      ++pos_;
    }
    if (pos_ == start) fail(std::string("expected ") + field);
    return value;
  }

  std::size_t pos_ = 0;
  std::size_t last_start_ = 0;  // offset of the most recent number

 private:
  const std::string& bytes_;
  const std::string& origin_;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

unsigned char quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::lround(c * 255.0));
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace

Tensord decode_image(const std::string& bytes, const std::string& origin) {
  HeaderReader r(bytes, origin);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    r.fail("not a binary PPM/PGM (expected P6 or P5 magic)");
  }
  const bool color = bytes[1] == '6';
  r.pos_ = 2;
  const std::size_t width = r.number("width");
  const std::size_t height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  const std::size_t maxval_at = r.last_start_;
  if (width == 0 || height == 0) r.fail("zero image dimension");
  if (maxval == 0 || maxval > 255) {
    r.fail_at(maxval_at, "unsupported maxval " + std::to_string(maxval));
  }
  if (r.pos_ >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos_]))) {
    r.fail("missing whitespace after header");
  }
  ++r.pos_;
  const std::size_t channels = color ? 3 : 1;
  const std::size_t need = width * height * channels;
  if (bytes.size() - r.pos_ < need) {
    r.fail("truncated pixel data (need " + std::to_string(need) + " bytes)");
  }
  std::vector<double> values(3 * width * height);
  // Division rather than a reciprocal multiply, so byte k decodes to the
  // correctly rounded k / maxval.
  const double denom = static_cast<double>(maxval);
  const std::size_t plane = width * height;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = r.pos_ + p * channels + (color ? c : 0);
      values[c * plane + p] = static_cast<unsigned char>(bytes[src]) / denom;
    }
  }
  return Tensord(Shape{3, height, width}, std::move(values));
}

Tensord load_image(const std::filesystem::path& path) {
  return decode_image(read_file(path), path.string());
}

std::string encode_ppm(const Tensord& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("write_ppm: expected [3,H,W], got " + to_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + 3 * plane);
  const auto v = image.data();
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) out[header + 3 * p + c] = static_cast<char>(quantize(v[c * plane + p]));
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensord& image) {
  write_bytes(path, encode_ppm(image));
}

void write_pgm(const std::filesystem::path& path, const Tensord& image) {
  const bool ok = image.rank() == 2 || (image.rank() == 3 && image.dim(0) == 1);
  if (!ok) throw DimensionError("write_pgm: expected [H,W] or [1,H,W], got " + to_string(image.shape()));
  const std::size_t h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (double v : image.data()) out.push_back(static_cast<char>(quantize(v)));
  write_bytes(path, out);
}

Tensord resize(const Tensord& image, std::size_t height, std::size_t width) {
  return warp_image(image, AffineParams::identity(), height, width);
}

}  // namespace epan
