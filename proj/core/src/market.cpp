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

#include "epan/market.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <regex>
#include <sstream>

#include "epan/errors.hpp"

namespace epan {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::query: return "query";
    case Split::gallery: return "gallery";
  }
  return "?";
}

std::optional<MarketName> parse_market_name(std::string_view filename) {
  static const std::regex pattern(R"(^(-1|\d+)_c(\d+)s(\d+)_(\d+)_(\d+)\.[A-Za-z0-9]+$)");
  const std::string base = std::filesystem::path(filename).filename().string();
  std::smatch m;
  if (!std::regex_match(base, m, pattern)) return std::nullopt;
  try {
    MarketName name;
    name.pid = std::stoi(m[1].str());
    name.camid = std::stoi(m[2].str());
    name.sequence = std::stoi(m[3].str());
    name.frame = std::stoi(m[4].str());
    name.bbox = std::stoi(m[5].str());
    return name;
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

std::string format_market_name(const MarketName& name, std::string_view extension) {
  char buf[96];
  if (name.pid < 0) {
    std::snprintf(buf, sizeof buf, "%d_c%ds%d_%06d_%02d", name.pid, name.camid, name.sequence,
                  name.frame, name.bbox);
  } else {
    std::snprintf(buf, sizeof buf, "%04d_c%ds%d_%06d_%02d", name.pid, name.camid, name.sequence,
                  name.frame, name.bbox);
  }
  return std::string(buf) + std::string(extension);
}

ExpectedCounts parse_expected_counts(std::string_view text) {
  static const std::regex pattern(R"(^\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(text.begin(), text.end(), m, pattern)) {
    throw ConfigError("expected counts must look like 'train,query,gallery', got '" +
                      std::string(text) + "'");
  }
  auto field = [&](int i) { return static_cast<std::size_t>(std::stoull(m[i].str())); };
  return {field(1), field(2), field(3)};
}

bool MarketDataset::matches(const ExpectedCounts& e) const {
  return train.size() == e.train && query.size() == e.query && gallery.size() == e.gallery;
}

std::string MarketDataset::summary() const {
  auto ids = [](const std::vector<SampleRecord>& r) {
    std::vector<int> p;
    for (const auto& s : r) p.push_back(s.pid);
    std::sort(p.begin(), p.end());
    return static_cast<std::size_t>(std::unique(p.begin(), p.end()) - p.begin());
  };
  std::ostringstream os;
  os << "train " << train.size() << " images / " << ids(train) << " ids; query " << query.size()
     << " / " << ids(query) << "; gallery " << gallery.size() << " / " << ids(gallery)
     << "; junk " << junk.size() << "; rejected " << rejects.size();
  return os.str();
}

MarketDataset load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  MarketDataset ds;
  const std::pair<const char*, Split> dirs[] = {
      {"bounding_box_train", Split::train}, {"query", Split::query}, {"bounding_box_test", Split::gallery}};
  for (const auto& [dir, split] : dirs) {
    const fs::path path = root / dir;
    if (!fs::is_directory(path)) {
      throw ConfigError("dataset root " + root.string() + " has no " + dir + "/ directory");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    auto& bucket = split == Split::train ? ds.train : split == Split::query ? ds.query : ds.gallery;
    for (const auto& f : files) {
      const auto name = parse_market_name(f.filename().string());
      if (!name) {
        ds.rejects.push_back((fs::path(dir) / f.filename()).string());
        continue;
      }
      SampleRecord rec{f.string(), name->pid, name->camid, split};
      if (name->junk()) {
        ds.junk.push_back(std::move(rec));
      } else {
        bucket.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

std::vector<int> class_labels(std::span<const SampleRecord> records, std::size_t* num_classes) {
  std::map<int, int> index;
  for (const auto& r : records) index.emplace(r.pid, 0);
  int next = 0;
  for (auto& [pid, label] : index) label = next++;
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const auto& r : records) labels.push_back(index.at(r.pid));
  if (num_classes) *num_classes = index.size();
  return labels;
}

}  // namespace epan
