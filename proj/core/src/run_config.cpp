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

#include "epan/run_config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "epan/errors.hpp"

namespace epan {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why + " (got '" + value + "')");
}

double to_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) {
    bad(key, value, "expected a finite real number");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& value) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad(key, value, "expected an integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad(key, value, "expected true or false");
}

void check_interval(const SchemaEntry& e, const std::string& value, double x) {
  if (e.constraint == "-") return;
  const char open = e.constraint.front(), close = e.constraint.back();
  const auto comma = e.constraint.find(',');
  const std::string lo_text = e.constraint.substr(1, comma - 1);
  const std::string hi_text = e.constraint.substr(comma + 1, e.constraint.size() - comma - 2);
  const double lo = to_real(e.key + " schema", lo_text);
  const double hi = hi_text == "inf" ? std::numeric_limits<double>::infinity()
                                     : to_real(e.key + " schema", hi_text);
  const bool ok_lo = open == '[' ? x >= lo : x > lo;
  const bool ok_hi = close == ']' ? x <= hi : x < hi;
  if (!ok_lo || !ok_hi) bad(e.key, value, "must lie in " + e.constraint);
}

// Checks one value against its schema entry.
void validate_value(const SchemaEntry& e, const std::string& value) {
  if (e.type == "int") {
    check_interval(e, value, static_cast<double>(to_int(e.key, value)));
  } else if (e.type == "real") {
    check_interval(e, value, to_real(e.key, value));
  } else if (e.type == "auto_real") {
    if (value != "auto") check_interval(e, value, to_real(e.key, value));
  } else if (e.type == "bool") {
    to_bool(e.key, value);
  } else if (e.type == "int_list") {
    std::stringstream ss(value);
    std::string item;
    std::size_t n = 0;
    while (std::getline(ss, item, ',')) {
      if (to_int(e.key, trim(item)) <= 0) bad(e.key, value, "list entries must be positive");
      ++n;
    }
    if (n == 0) bad(e.key, value, "expected a comma-separated list");
  } else if (e.type.rfind("enum:", 0) == 0) {
    std::stringstream ss(e.type.substr(5));
    std::string option;
    while (std::getline(ss, option, '|')) {
      if (option == value) return;
    }
    bad(e.key, value, "expected one of " + e.type.substr(5));
  }
}

std::vector<SchemaEntry> parse_schema(std::string_view text) {
  std::vector<SchemaEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream fields(t);
    SchemaEntry e;
    fields >> e.key >> e.type >> e.default_value >> e.constraint;
    std::getline(fields, e.description);
    e.description = trim(e.description);
    if (e.default_value == "\"\"") e.default_value.clear();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

const std::vector<SchemaEntry>& schema_entries() {
  static const std::vector<SchemaEntry> entries = parse_schema(schema_text());
  return entries;
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           std::string_view origin) {
  const auto& schema = schema_entries();
  std::map<std::string, std::string> values;
  for (const auto& e : schema) values[e.key] = e.default_value;

  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!values.contains(key)) throw ConfigError(where + ": unknown config key '" + key + "'");
    if (seen.contains(key)) {
      throw ConfigError(where + ": config key '" + key + "' already set on line " +
                        std::to_string(seen[key]));
    }
    seen[key] = line_no;
    values[key] = value;
  }
  for (const auto& e : schema) validate_value(e, values[e.key]);

  auto str = [&](const char* k) -> const std::string& { return values.at(k); };
  auto num = [&](const char* k) { return to_real(k, values.at(k)); };
  auto count = [&](const char* k) { return static_cast<std::size_t>(to_int(k, values.at(k))); };
  auto flag = [&](const char* k) { return to_bool(k, values.at(k)); };
  auto path = [&](const char* k) -> std::filesystem::path {
    const std::filesystem::path p = values.at(k);
    if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
    return std::filesystem::absolute(base_dir / p).lexically_normal();
  };

  RunConfig c;
  c.seed = static_cast<std::uint64_t>(to_int("seed", str("seed")));
  c.workers = count("workers");
  c.double_precision = str("precision") == "double";
  c.synthetic_source = str("dataset.source") == "synthetic";
  c.dataset_root = path("dataset.root");
  c.expected_counts = str("dataset.expected_counts");
  if (!c.expected_counts.empty()) parse_expected_counts(c.expected_counts);
  c.output_dir = path("output.dir");
  c.checkpoint_every = count("output.checkpoint_every");

  c.model.height = count("model.height");
  c.model.width = count("model.width");
  {
    std::stringstream ss(str("model.stage_channels"));
    std::string item;
    std::vector<std::size_t> widths;
    while (std::getline(ss, item, ',')) {
      widths.push_back(static_cast<std::size_t>(to_int("model.stage_channels", trim(item))));
    }
    if (widths.size() != 4) {
      bad("model.stage_channels", str("model.stage_channels"), "expected exactly four widths");
    }
    for (std::size_t i = 0; i < 4; ++i) c.model.stage_channels[i] = widths[i];
  }
  c.model.embed_dim = count("model.embed_dim");
  c.model.grid_channels = count("model.grid_channels");
  c.model.ibn = flag("model.ibn");
  c.model.affine = flag("model.affine");
  if (c.model.height % 16 != 0 || c.model.width % 16 != 0) {
    bad("model.height", str("model.height") + "x" + str("model.width"),
        "input size must be a multiple of 16");
  }

  c.loss.label_smooth = flag("loss.label_smooth");
  c.loss.epsilon = num("loss.epsilon");
  c.loss.smoothing_form = str("loss.smoothing_form") == "offset_in_log"
                              ? SmoothingForm::offset_in_log
                              : SmoothingForm::smoothed_targets;
  c.loss.margin = num("loss.margin");
  c.loss.lambda_triplet = num("loss.lambda_triplet");
  c.loss.squared_distances = flag("loss.squared_distances");

  c.optim.kind = parse_optimizer_kind(str("optim.kind"));
  c.optim.learning_rate = str("optim.learning_rate") == "auto"
                              ? OptimConfig::default_learning_rate(c.optim.kind)
                              : num("optim.learning_rate");
  c.optim.momentum = num("optim.momentum");
  c.optim.beta1 = num("optim.beta1");
  c.optim.beta2 = num("optim.beta2");
  c.optim.adam_epsilon = num("optim.adam_epsilon");
  c.optim.rms_decay = num("optim.rms_decay");
  c.optim.rms_epsilon = num("optim.rms_epsilon");
  c.optim.step_size = count("optim.step_size");
  c.optim.gamma = num("optim.gamma");
  c.optim.weight_decay = num("optim.weight_decay");
  if (const double g = num("optim.grid_lr_scale"); g != 1.0) {
    c.optim.lr_multipliers.push_back({"grid.", g});
  }
  c.optim.epochs = count("optim.epochs");
  c.optim.ids_per_batch = count("optim.ids_per_batch");
  c.optim.instances_per_id = count("optim.instances_per_id");
  c.optim.seed = c.seed;

  const bool aug_on = flag("aug.enabled");
  c.aug.flip = aug_on && flag("aug.flip");
  c.aug.flip_p = num("aug.flip_p");
  c.aug.crop = aug_on && flag("aug.crop");
  c.aug.crop_p = num("aug.crop_p");
  c.aug.crop_pad = count("aug.crop_pad");
  c.aug.erase = aug_on && flag("aug.erase");
  c.aug.erase_p = num("aug.erase_p");
  c.aug.erase_area_min = num("aug.erase_area_min");
  c.aug.erase_area_max = num("aug.erase_area_max");
  if (c.aug.erase_area_min > c.aug.erase_area_max) {
    bad("aug.erase_area_min", str("aug.erase_area_min"), "must not exceed aug.erase_area_max");
  }

  c.metric = parse_metric(str("eval.metric"));
  c.max_rank = count("eval.max_rank");
  c.raw_pixel_embedding = str("eval.embedding") == "raw_pixels";

  c.synth.num_ids = count("synth.num_ids");
  c.synth.per_id = count("synth.per_id");
  c.synth.height = count("synth.height");
  c.synth.width = count("synth.width");
  c.synth.corruption = parse_corruption(str("synth.corruption"));
  c.synth.scale_min = num("synth.scale_min");
  c.synth.scale_max = num("synth.scale_max");
  c.synth.shift_min = num("synth.shift_min");
  c.synth.shift_max = num("synth.shift_max");
  c.synth.brightness = num("synth.brightness");
  c.synth.train_fraction = num("synth.train_fraction");
  c.synth.seed = static_cast<std::uint64_t>(to_int("synth.seed", str("synth.seed")));
  if (c.synth.scale_min > c.synth.scale_max) {
    bad("synth.scale_min", str("synth.scale_min"), "must not exceed synth.scale_max");
  }
  if (c.synth.shift_min > c.synth.shift_max) {
    bad("synth.shift_min", str("synth.shift_min"), "must not exceed synth.shift_max");
  }

  for (const auto& e : schema) {
    std::string v = values[e.key];
    if (e.key == "optim.learning_rate" && v == "auto") {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", c.optim.learning_rate);
      v = buf;
    } else if (e.type == "path" && !v.empty()) {
      v = path(e.key.c_str()).string();
    }
    c.resolved.emplace_back(e.key, v);
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path(), path.string());
}

std::string resolved_config_text(const RunConfig& config) {
  std::string out = "# resolved run configuration\n";
  for (const auto& [k, v] : config.resolved) out += k + " = " + v + "\n";
  return out;
}

}  // namespace epan
