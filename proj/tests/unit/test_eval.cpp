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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "epan/errors.hpp"
#include "epan/eval.hpp"

namespace epan {
namespace {

// Reference retrieval metrics by enumeration: each candidate's rank is the
// number of candidates strictly ahead of it under (distance, index) order.
struct Reference {
  std::vector<double> cmc;
  double map = 0.0;
  std::size_t valid = 0;
};

Reference brute_force(const Tensord& d, const std::vector<int>& qp, const std::vector<int>& qc,
                      const std::vector<int>& gp, const std::vector<int>& gc, std::size_t max_rank) {
  const std::size_t nq = qp.size(), ng = gp.size();
  Reference ref;
  ref.cmc.assign(max_rank, 0.0);
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<std::size_t> cand;
    for (std::size_t g = 0; g < ng; ++g) {
      if (gp[g] == -1) continue;
      if (gp[g] == qp[q] && gc[g] == qc[q]) continue;
      cand.push_back(g);
    }
    std::vector<std::size_t> relevant_ranks;
    for (std::size_t g : cand) {
      if (gp[g] != qp[q]) continue;
      std::size_t ahead = 0;
      for (std::size_t o : cand) {
        const double a = d[q * ng + o], b = d[q * ng + g];
        if (a < b || (a == b && o < g)) ++ahead;
      }
      relevant_ranks.push_back(ahead + 1);
    }
    if (relevant_ranks.empty()) continue;
    ++ref.valid;
    std::sort(relevant_ranks.begin(), relevant_ranks.end());
    double ap = 0.0;
    for (std::size_t i = 0; i < relevant_ranks.size(); ++i) {
      ap += static_cast<double>(i + 1) / static_cast<double>(relevant_ranks[i]);
    }
    ref.map += ap / static_cast<double>(relevant_ranks.size());
    for (std::size_t k = relevant_ranks[0]; k <= max_rank; ++k) ref.cmc[k - 1] += 1.0;
  }
  for (auto& c : ref.cmc) c /= static_cast<double>(ref.valid);
  ref.map /= static_cast<double>(ref.valid);
  return ref;
}

TEST(DistanceMatrix, Examples) {
  const Tensord pts({2, 2}, {0, 0, 3, 4});
  const Tensord e = distance_matrix(pts, pts, Metric::euclidean);
  EXPECT_EQ(e[0], 0.0);
  EXPECT_EQ(e[3], 0.0);
  EXPECT_DOUBLE_EQ(e[1], 5.0);
  const Tensord a({1, 2}, {1, 0}), b({1, 2}, {0, 2});
  EXPECT_DOUBLE_EQ(distance_matrix(a, b, Metric::cosine)[0], 1.0);
  std::size_t zero = 0;
  const Tensord z = distance_matrix(Tensord({1, 2}, {0, 0}), b, Metric::cosine, &zero);
  EXPECT_EQ(z[0], kMaxCosineDistance);
  EXPECT_EQ(zero, 1u);
  EXPECT_THROW(distance_matrix(Tensord({1, 2}), Tensord({1, 3}), Metric::euclidean), DimensionError);
}

TEST(DistanceMatrix, SelfDistanceIsZero) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensord x({6, 9});
  for (auto& v : x.mutable_data()) v = n(rng);
  const Tensord d = distance_matrix(x, x, Metric::euclidean);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(d[i * 6 + i], 0.0, 1e-12);
  for (double v : d.data()) EXPECT_GE(v, 0.0);
}

TEST(Evaluate, HandCase) {
  // Relevant items at ranks 1 and 3: AP = (1/1 + 2/3) / 2.
  const Tensord d({1, 3}, {0.1, 0.2, 0.3});
  const std::vector<int> qp{1}, qc{1}, gp{1, 2, 1}, gc{2, 2, 3};
  const EvalReport r = evaluate(d, qp, qc, gp, gc, 3);
  EXPECT_NEAR(r.map, 5.0 / 6.0, 1e-12);
  EXPECT_EQ(r.cmc, (std::vector<double>{1, 1, 1}));
}

TEST(Evaluate, PerfectRanking) {
  const Tensord d({1, 4}, {0.1, 0.2, 0.3, 0.4});
  const std::vector<int> qp{5}, qc{1}, gp{5, 5, 5, 6}, gc{2, 3, 2, 1};
  const EvalReport r = evaluate(d, qp, qc, gp, gc, 4);
  EXPECT_EQ(r.map, 1.0);
  EXPECT_EQ(r.rank(1), 1.0);
}

TEST(Evaluate, SameCameraMatchesAndJunkAreDropped) {
  // The nearest item shares pid and camera, the second is junk: both drop
  // out, so the true match at position 3 becomes rank 1.
  const Tensord d({1, 4}, {0.1, 0.2, 0.3, 0.4});
  const std::vector<int> qp{3}, qc{1}, gp{3, -1, 3, 4}, gc{1, 2, 2, 1};
  const EvalReport r = evaluate(d, qp, qc, gp, gc, 2);
  EXPECT_EQ(r.rank(1), 1.0);
  EXPECT_EQ(r.map, 1.0);
}

TEST(Evaluate, QueriesWithoutMatchesAreExcluded) {
  const Tensord d({2, 2}, {0.1, 0.2, 0.3, 0.4});
  const std::vector<int> qp{1, 9}, qc{1, 1}, gp{1, 2}, gc{2, 2};
  const EvalReport r = evaluate(d, qp, qc, gp, gc, 2);
  EXPECT_EQ(r.num_valid_queries, 1u);
  EXPECT_EQ(r.num_invalid_queries, 1u);
  EXPECT_TRUE(std::isnan(r.per_query_ap[1]));
  const std::vector<int> none{7, 8};
  EXPECT_THROW(evaluate(d, none, qc, gp, gc, 2), EvaluationError);
}

TEST(Evaluate, TiesBreakByGalleryIndex) {
  const Tensord d({1, 2}, {0.5, 0.5});
  const std::vector<int> qp{1}, qc{1}, gp{2, 1}, gc{2, 2};
  const EvalReport r = evaluate(d, qp, qc, gp, gc, 2);
  EXPECT_EQ(r.rank(1), 0.0);
  EXPECT_EQ(r.rank(2), 1.0);
  EXPECT_DOUBLE_EQ(r.map, 0.5);
}

TEST(Evaluate, MatchesEnumerationOnRandomInstances) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t nq = 1 + rng() % 5, ng = 1 + rng() % 20;
    std::uniform_int_distribution<int> pid(-1, 3), cam(1, 3), dist(0, 6);
    std::vector<int> qp(nq), qc(nq), gp(ng), gc(ng);
    for (auto& p : qp) p = std::uniform_int_distribution<int>(0, 3)(rng);
    for (auto& c : qc) c = cam(rng);
    for (auto& p : gp) p = pid(rng);
    for (auto& c : gc) c = cam(rng);
    // Coarse integer distances force plenty of ties.
    Tensord d({nq, ng});
    for (auto& v : d.mutable_data()) v = dist(rng);
    const std::size_t max_rank = 1 + rng() % 20;
    const Reference ref = brute_force(d, qp, qc, gp, gc, max_rank);
    if (ref.valid == 0) {
      EXPECT_THROW(evaluate(d, qp, qc, gp, gc, max_rank), EvaluationError);
      continue;
    }
    const EvalReport r = evaluate(d, qp, qc, gp, gc, max_rank);
    EXPECT_EQ(r.num_valid_queries, ref.valid);
    EXPECT_NEAR(r.map, ref.map, 1e-9) << "trial " << trial;
    ASSERT_EQ(r.cmc.size(), max_rank);
    for (std::size_t k = 0; k < max_rank; ++k) EXPECT_NEAR(r.cmc[k], ref.cmc[k], 1e-9);
  }
}

TEST(Evaluate, Properties) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t nq = 4, ng = 15;
    std::vector<int> qp{0, 1, 2, 3}, qc{1, 1, 2, 2}, gp(ng), gc(ng);
    for (std::size_t g = 0; g < ng; ++g) {
      gp[g] = static_cast<int>(g % 4);
      gc[g] = static_cast<int>(1 + g % 3);
    }
    Tensord d({nq, ng});
    for (auto& v : d.mutable_data()) v = u(rng);
    const EvalReport r = evaluate(d, qp, qc, gp, gc, ng);
    for (std::size_t k = 1; k < r.cmc.size(); ++k) EXPECT_LE(r.cmc[k - 1], r.cmc[k]);
    for (double ap : r.per_query_ap) {
      if (std::isnan(ap)) continue;
      EXPECT_GE(ap, 0.0);
      EXPECT_LE(ap, 1.0);
    }
    // Permuting the gallery (no ties here) leaves the report unchanged.
    std::vector<std::size_t> perm(ng);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensord dp({nq, ng});
    std::vector<int> pp(ng), pc(ng);
    for (std::size_t g = 0; g < ng; ++g) {
      pp[g] = gp[perm[g]];
      pc[g] = gc[perm[g]];
      for (std::size_t q = 0; q < nq; ++q) dp.mutable_data()[q * ng + g] = d[q * ng + perm[g]];
    }
    const EvalReport rp = evaluate(dp, qp, qc, pp, pc, ng);
    EXPECT_EQ(rp.cmc, r.cmc);
    EXPECT_NEAR(rp.map, r.map, 1e-15);
  }
}

TEST(Evaluate, ApIsOneExactlyWhenRelevantItemsLead) {
  const std::vector<int> qp{1}, qc{1}, gp{1, 1, 2, 2}, gc{2, 3, 2, 3};
  EXPECT_EQ(evaluate(Tensord({1, 4}, {0.1, 0.2, 0.3, 0.4}), qp, qc, gp, gc, 4).map, 1.0);
  EXPECT_LT(evaluate(Tensord({1, 4}, {0.1, 0.35, 0.3, 0.4}), qp, qc, gp, gc, 4).map, 1.0);
}

TEST(Evaluate, ReportCsv) {
  const Tensord d({1, 3}, {0.1, 0.2, 0.3});
  const std::vector<int> qp{1}, qc{1}, gp{1, 2, 1}, gc{2, 2, 3};
  const std::string csv = report_csv(evaluate(d, qp, qc, gp, gc, 2));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "rank,cmc");
  EXPECT_NE(csv.find("\n1,1"), std::string::npos);
  EXPECT_NE(csv.find("map,0.83333333333333"), std::string::npos);
}

Tensord striped(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensord t({c, h, w});
  for (auto& v : t.mutable_data()) v = n(rng);
  return t;
}

TEST(BlockDistance, SelfComparisonHasZeroDiagonal) {
  const Tensord a = striped(4, 16, 3, 1);
  const Tensord m = block_distance_matrix(a, a, 8);
  ASSERT_EQ(m.shape(), (Shape{8, 8}));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(m[i * 8 + i], 0.0, 1e-12);
  for (double v : m.data()) EXPECT_GE(v, 0.0);
}

TEST(BlockDistance, CyclicShiftMovesTheZeroBand) {
  const std::size_t c = 5, h = 16, w = 4, blocks = 8, rows = h / blocks;
  const Tensord a = striped(c, h, w, 2);
  // b's stripe j is a's stripe (j + 1) mod 8.
  Tensord b({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        b.mutable_data()[(ch * h + y) * w + x] = a[(ch * h + (y + rows) % h) * w + x];
  const Tensord m = block_distance_matrix(a, b, blocks);
  for (std::size_t i = 0; i < blocks; ++i) {
    const auto row = m.data().subspan(i * blocks, blocks);
    const auto best = static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
    EXPECT_EQ(best, (i + blocks - 1) % blocks);
    EXPECT_NEAR(row[best], 0.0, 1e-12);
  }
}

TEST(BlockDistance, IndivisibleHeightIsADimensionError) {
  EXPECT_THROW(block_distance_matrix(striped(2, 10, 2, 3), striped(2, 10, 2, 4), 8), DimensionError);
}

}  // namespace
}  // namespace epan
