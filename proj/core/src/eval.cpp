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

#include "epan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "epan/errors.hpp"
#include "epan/image_io.hpp"

namespace epan {

std::string_view to_string(Metric metric) {
  return metric == Metric::euclidean ? "euclidean" : "cosine";
}

Metric parse_metric(std::string_view name) {
  if (name == "euclidean") return Metric::euclidean;
  if (name == "cosine") return Metric::cosine;
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

Tensord distance_matrix(const Tensord& queries, const Tensord& gallery, Metric metric,
                        std::size_t* zero_rows) {
  if (queries.rank() != 2 || gallery.rank() != 2 || queries.dim(1) != gallery.dim(1)) {
    throw DimensionError("distance_matrix expects [nq,D] and [ng,D], got " +
                         to_string(queries.shape()) + " and " + to_string(gallery.shape()));
  }
  const std::size_t nq = queries.dim(0), ng = gallery.dim(0), d = queries.dim(1);
  auto q = queries.data();
  auto g = gallery.data();
  Tensord out({nq, ng});
  auto o = out.mutable_data();
  if (metric == Metric::euclidean) {
    for (std::size_t i = 0; i < nq; ++i) {
      for (std::size_t j = 0; j < ng; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = q[i * d + k] - g[j * d + k];
          s += diff * diff;
        }
        o[i * ng + j] = std::sqrt(s);
      }
    }
    if (zero_rows) *zero_rows = 0;
    return out;
  }
  auto norms = [d](std::span<const double> x, std::size_t n) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += x[i * d + k] * x[i * d + k];
      r[i] = std::sqrt(s);
    }
    return r;
  };
  const auto qn = norms(q, nq);
  const auto gn = norms(g, ng);
  std::size_t zeros = static_cast<std::size_t>(std::count(qn.begin(), qn.end(), 0.0) +
                                               std::count(gn.begin(), gn.end(), 0.0));
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t j = 0; j < ng; ++j) {
      if (qn[i] == 0.0 || gn[j] == 0.0) {
        o[i * ng + j] = kMaxCosineDistance;
        continue;
      }
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += (q[i * d + k] / qn[i]) * (g[j * d + k] / gn[j]);
      o[i * ng + j] = 1.0 - s;
    }
  }
  if (zero_rows) *zero_rows = zeros;
  return out;
}

EvalReport evaluate(const Tensord& distmat, std::span<const int> query_pids,
                    std::span<const int> query_camids, std::span<const int> gallery_pids,
                    std::span<const int> gallery_camids, std::size_t max_rank, Metric metric) {
  if (distmat.rank() != 2) throw DimensionError("evaluate expects a [nq,ng] distance matrix");
  const std::size_t nq = distmat.dim(0), ng = distmat.dim(1);
  if (query_pids.size() != nq || query_camids.size() != nq || gallery_pids.size() != ng ||
      gallery_camids.size() != ng) {
    throw DimensionError("evaluate: id arrays do not match the distance matrix " +
                         to_string(distmat.shape()));
  }
  if (max_rank == 0) throw UsageError("evaluate: max_rank must be positive");
  EvalReport report;
  report.metric = metric;
  report.cmc.assign(max_rank, 0.0);
  report.per_query_ap.assign(nq, std::numeric_limits<double>::quiet_NaN());
  auto dist = distmat.data();
  std::vector<std::size_t> order(ng);
  double ap_sum = 0.0;
  for (std::size_t qi = 0; qi < nq; ++qi) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double* row = dist.data() + qi * ng;
    std::stable_sort(order.begin(), order.end(),
                     [row](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    std::size_t rank = 0, hits = 0, first_hit = 0;
    double precision_sum = 0.0;
    for (std::size_t gi : order) {
      const int pid = gallery_pids[gi];
      if (pid == -1) continue;
      if (pid == query_pids[qi] && gallery_camids[gi] == query_camids[qi]) continue;
      ++rank;
      if (pid == query_pids[qi]) {
        if (hits == 0) first_hit = rank;
        ++hits;
        precision_sum += static_cast<double>(hits) / static_cast<double>(rank);
      }
    }
    if (hits == 0) {
      ++report.num_invalid_queries;
      continue;
    }
    ++report.num_valid_queries;
    for (std::size_t k = first_hit; k <= max_rank; ++k) report.cmc[k - 1] += 1.0;
    const double ap = precision_sum / static_cast<double>(hits);
    report.per_query_ap[qi] = ap;
    ap_sum += ap;
  }
  if (report.num_valid_queries == 0) {
    throw EvaluationError("no query has a relevant gallery entry after filtering");
  }
  const auto valid = static_cast<double>(report.num_valid_queries);
  for (auto& c : report.cmc) c /= valid;
  report.map = ap_sum / valid;
  return report;
}

Tensord block_distance_matrix(const Tensord& a, const Tensord& b, std::size_t nblocks) {
  if (a.rank() != 3 || a.shape() != b.shape()) {
    throw DimensionError("block_distance_matrix expects two equal [C,H,W] maps, got " +
                         to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
  if (nblocks == 0 || h % nblocks != 0) {
    throw DimensionError("height " + std::to_string(h) + " is not divisible into " +
                         std::to_string(nblocks) + " blocks");
  }
  const std::size_t rows = h / nblocks;
  auto stripes = [&](const Tensord& f) {
    std::vector<double> desc(nblocks * c, 0.0);
    auto d = f.data();
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
      double norm = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t y = blk * rows; y < (blk + 1) * rows; ++y) {
          for (std::size_t x = 0; x < w; ++x) s += d[(ch * h + y) * w + x];
        }
        s /= static_cast<double>(rows * w);
        desc[blk * c + ch] = s;
        norm += s * s;
      }
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (std::size_t ch = 0; ch < c; ++ch) desc[blk * c + ch] /= norm;
      }
    }
    return desc;
  };
  const auto da = stripes(a);
  const auto db = stripes(b);
  Tensord out({nblocks, nblocks});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < nblocks; ++i) {
    for (std::size_t j = 0; j < nblocks; ++j) {
      double s = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double diff = da[i * c + ch] - db[j * c + ch];
        s += diff * diff;
      }
      o[i * nblocks + j] = std::sqrt(s);
    }
  }
  return out;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "rank,cmc\n";
  char buf[64];
  for (std::size_t k = 0; k < report.cmc.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k + 1, report.cmc[k]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "map,%.17g\n", report.map);
  out += buf;
  return out;
}

std::string matrix_csv(const Tensord& matrix) {
  if (matrix.rank() != 2) throw DimensionError("matrix_csv expects a 2-D tensor");
  std::string out;
  char buf[32];
  const std::size_t r = matrix.dim(0), c = matrix.dim(1);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      std::snprintf(buf, sizeof buf, "%s%.10g", j ? "," : "", matrix[i * c + j]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_matrix_pgm(const std::filesystem::path& path, const Tensord& matrix) {
  if (matrix.rank() != 2) throw DimensionError("write_matrix_pgm expects a 2-D tensor");
  auto d = matrix.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double range = *hi - *lo;
  Tensord unit(matrix.shape());
  auto u = unit.mutable_data();
  for (std::size_t k = 0; k < d.size(); ++k) u[k] = range > 0.0 ? (d[k] - *lo) / range : 0.0;
  write_pgm(path, unit);
}

}  // namespace epan
