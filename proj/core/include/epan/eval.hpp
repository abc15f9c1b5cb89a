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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "epan/tensor.hpp"

namespace epan {

enum class Metric { euclidean, cosine };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);  // throws ConfigError

/// Distance under cosine for a row with zero norm.
inline constexpr double kMaxCosineDistance = 2.0;

/// Pairwise distances between query rows Q [nq,D] and gallery rows G [ng,D].
/// Cosine distance is 1 - cos; a pair involving a zero-norm row gets
/// kMaxCosineDistance and the row is counted in `zero_rows`.
Tensord distance_matrix(const Tensord& queries, const Tensord& gallery, Metric metric,
                        std::size_t* zero_rows = nullptr);

struct EvalReport {
  std::vector<double> cmc;           // cmc[k-1] is Rank-k
  double map = 0.0;
  std::vector<double> per_query_ap;  // NaN for excluded queries
  std::size_t num_valid_queries = 0;
  std::size_t num_invalid_queries = 0;
  Metric metric = Metric::euclidean;

  double rank(std::size_t k) const { return cmc.at(k - 1); }
};

/// Market1501-protocol retrieval metrics. For each query the gallery is
/// sorted by ascending distance, ties broken by gallery index; entries with
/// the query's pid and camid, and junk entries (pid -1), are dropped. Queries
/// without any remaining relevant entry are excluded and counted. Throws
/// EvaluationError when no query is valid.
EvalReport evaluate(const Tensord& distmat, std::span<const int> query_pids,
                    std::span<const int> query_camids, std::span<const int> gallery_pids,
                    std::span<const int> gallery_camids, std::size_t max_rank,
                    Metric metric = Metric::euclidean);

/// Splits two [C,H,W] feature maps into `nblocks` horizontal stripes, pools
/// each stripe to an L2-normalized C-vector, and returns the Euclidean
/// distance between stripe i of `a` and stripe j of `b` at (i, j).
Tensord block_distance_matrix(const Tensord& a, const Tensord& b, std::size_t nblocks = 8);

/// "rank,cmc" rows followed by a "map,<value>" line.
std::string report_csv(const EvalReport& report);
/// Rows of comma-separated values.
std::string matrix_csv(const Tensord& matrix);
/// Min-max scales a 2-D matrix to 0..255 and writes it as P5.
void write_matrix_pgm(const std::filesystem::path& path, const Tensord& matrix);

}  // namespace epan
