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
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "epan/augment.hpp"
#include "epan/eval.hpp"
#include "epan/losses.hpp"
#include "epan/model.hpp"
#include "epan/optim.hpp"
#include "epan/synthetic.hpp"

// Run configuration: a plain-text file of `key = value` lines checked against
// the schema compiled into the library. Lines starting with '#' are comments.

namespace epan {

struct SchemaEntry {
  std::string key;
  std::string type;
  std::string default_value;
  std::string constraint;
  std::string description;
};

/// The schema file as compiled in.
std::string_view schema_text();
const std::vector<SchemaEntry>& schema_entries();

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool double_precision = false;

  bool synthetic_source = false;
  std::filesystem::path dataset_root;
  std::string expected_counts;  // empty when not checked

  std::filesystem::path output_dir;
  std::size_t checkpoint_every = 0;

  ModelConfig model;  // num_classes is filled in from the training data
  LossConfig loss;
  OptimConfig optim;
  AugmentConfig aug;  // erase_fill is filled in from the training data
  SynthSpec synth;

  Metric metric = Metric::euclidean;
  std::size_t max_rank = 50;
  bool raw_pixel_embedding = false;

  /// Every schema key with its effective value, in schema order.
  std::vector<std::pair<std::string, std::string>> resolved;
};

/// Parses config text on top of the schema defaults. Relative paths resolve
/// against `base_dir`. Throws ConfigError naming the offending key on unknown
/// keys, malformed values or constraint violations.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {},
                           std::string_view origin = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// A complete config file reproducing `config`, one key per line.
std::string resolved_config_text(const RunConfig& config);

}  // namespace epan
