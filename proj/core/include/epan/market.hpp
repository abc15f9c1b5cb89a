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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace epan {

enum class Split { train, query, gallery };
std::string_view to_string(Split split);

/// Fields of a Market1501-style file name
/// `{pid}_c{camid}s{sequence}_{frame}_{bbox}.{ext}`. pid -1 marks junk
/// detections; pid 0 marks distractors.
struct MarketName {
  int pid = 0;
  int camid = 0;
  int sequence = 1;
  int frame = 0;
  int bbox = 0;

  bool junk() const { return pid == -1; }
  bool operator==(const MarketName&) const = default;
};

/// Parses the base name of `filename`; nullopt when it does not follow the
/// pattern.
std::optional<MarketName> parse_market_name(std::string_view filename);
/// Inverse of parse_market_name: pid zero-padded to 4 digits, frame to 6,
/// bbox to 2. `extension` includes the dot.
std::string format_market_name(const MarketName& name, std::string_view extension = ".jpg");

struct SampleRecord {
  std::string image_path;
  int pid = 0;
  int camid = 0;
  Split split = Split::train;
};

struct ExpectedCounts {
  std::size_t train = 0;
  std::size_t query = 0;
  std::size_t gallery = 0;
};
/// "train,query,gallery"; throws ConfigError on anything else.
ExpectedCounts parse_expected_counts(std::string_view text);

struct MarketDataset {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> query;
  std::vector<SampleRecord> gallery;
  std::vector<SampleRecord> junk;    // pid -1, kept out of every split
  std::vector<std::string> rejects;  // file names that did not parse

  ExpectedCounts counts() const { return {train.size(), query.size(), gallery.size()}; }
  bool matches(const ExpectedCounts& expected) const;
  std::string summary() const;
};

/// Reads bounding_box_train/, query/ and bounding_box_test/ under `root`.
/// Files are visited in lexicographic order. Throws ConfigError when a split
/// directory is missing.
MarketDataset load_dataset(const std::filesystem::path& root);

/// Maps person ids to contiguous class indices in order of first appearance
/// after sorting by pid.
std::vector<int> class_labels(std::span<const SampleRecord> records, std::size_t* num_classes);

}  // namespace epan
