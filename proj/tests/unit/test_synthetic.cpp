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

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "epan/errors.hpp"
#include "epan/eval.hpp"
#include "epan/image_io.hpp"
#include "epan/market.hpp"
#include "epan/synthetic.hpp"

namespace epan {
namespace {

namespace fs = std::filesystem;

double l2(const Tensord& a, const Tensord& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

SynthSpec small(Corruption c, std::uint64_t seed = 0) {
  SynthSpec s;
  s.num_ids = 5;
  s.per_id = 8;
  s.height = 32;
  s.width = 32;
  s.corruption = c;
  s.seed = seed;
  return s;
}

TEST(Synthetic, CleanSamplesDifferOnlyInBrightness) {
  const SynthDataset d = generate_synthetic(small(Corruption::none));
  for (const auto& s : d.samples) {
    const Tensord& fig = d.canonical[s.pid - 1];
    for (std::size_t i = 0; i < fig.size(); ++i) ASSERT_NEAR(s.image[i], s.brightness * fig[i], 1e-12);
    EXPECT_EQ(s.theta, AffineParams::identity());
  }
}

TEST(Synthetic, InverseRecoversTheFigure) {
  for (Corruption c : {Corruption::background_excess, Corruption::partial_loss, Corruption::mixed}) {
    SynthSpec spec;  // full 64x64 toy size, 10 ids x 40
    spec.corruption = c;
    const SynthDataset d = generate_synthetic(spec);
    double total = 0.0;
    for (const auto& s : d.samples) {
      double valid = 0.0;
      const double err = recovery_error(s, d.canonical[s.pid - 1], &valid);
      total += err;
      EXPECT_LT(err, 0.02) << s.name;
      EXPECT_GT(valid, 0.3) << s.name;
      const AffineParams round = compose(s.theta, s.inverse);
      for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(round[k], AffineParams::identity()[k], 1e-12);
    }
    EXPECT_LT(total / static_cast<double>(d.samples.size()), 0.02) << to_string(c);
  }
}

TEST(Synthetic, CorruptionParametersStayInRange) {
  const SynthSpec spec = small(Corruption::mixed, 3);
  for (const auto& s : generate_synthetic(spec).samples) {
    if (s.kind == Corruption::background_excess) {
      EXPECT_GE(s.inverse[0], spec.scale_min);
      EXPECT_LE(s.inverse[0], spec.scale_max);
      EXPECT_EQ(s.inverse[0], s.inverse[4]);
    } else {
      ASSERT_EQ(s.kind, Corruption::partial_loss);
      const double shift = std::hypot(s.inverse[2], s.inverse[5]);
      EXPECT_GE(shift, spec.shift_min - 1e-12);
      EXPECT_LE(shift, spec.shift_max + 1e-12);
    }
  }
}

TEST(Synthetic, IdentitiesAreSeparable) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SynthDataset d = generate_synthetic(small(Corruption::none, seed));
    double between = 0.0, within = 0.0;
    std::size_t nb = 0, nw = 0;
    for (std::size_t i = 0; i < d.canonical.size(); ++i)
      for (std::size_t j = i + 1; j < d.canonical.size(); ++j, ++nb) between += l2(d.canonical[i], d.canonical[j]);
    for (std::size_t i = 0; i < d.samples.size(); ++i)
      for (std::size_t j = i + 1; j < d.samples.size(); ++j)
        if (d.samples[i].pid == d.samples[j].pid) {
          within += l2(d.samples[i].image, d.samples[j].image);
          ++nw;
        }
    EXPECT_GT(between / nb, within / nw) << "seed " << seed;
  }
}

TEST(Synthetic, CleanDataIsSolvedByRawPixels) {
  const SynthDataset d = generate_synthetic(small(Corruption::none, 1));
  auto stack = [](const std::vector<const SynthSample*>& v, std::vector<int>* pids, std::vector<int>* cams) {
    const std::size_t dim = v.front()->image.size();
    Tensord m({v.size(), dim});
    auto out = m.mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::copy(v[i]->image.data().begin(), v[i]->image.data().end(), out.begin() + static_cast<long>(i * dim));
      pids->push_back(v[i]->pid);
      cams->push_back(v[i]->camid);
    }
    return m;
  };
  std::vector<int> qp, qc, gp, gc;
  const Tensord q = stack(d.split(Split::query), &qp, &qc);
  const Tensord g = stack(d.split(Split::gallery), &gp, &gc);
  const EvalReport r = evaluate(distance_matrix(q, g, Metric::cosine), qp, qc, gp, gc, 5, Metric::cosine);
  EXPECT_EQ(r.rank(1), 1.0);
  EXPECT_EQ(r.map, 1.0);
}

TEST(Synthetic, SplitLayout) {
  SynthSpec spec = small(Corruption::mixed);
  spec.per_id = 10;
  const SynthDataset d = generate_synthetic(spec);
  std::map<int, std::map<Split, std::size_t>> counts;
  for (const auto& s : d.samples) ++counts[s.pid][s.split];
  ASSERT_EQ(counts.size(), spec.num_ids);
  for (const auto& [pid, c] : counts) {
    EXPECT_EQ(c.at(Split::train), 5u);
    EXPECT_EQ(c.at(Split::query), 2u);
    EXPECT_EQ(c.at(Split::gallery), 3u);
  }
  std::set<int> query_cams;
  for (const auto* s : d.split(Split::query)) query_cams.insert(s->camid);
  EXPECT_EQ(query_cams, (std::set<int>{1, 2}));
}

TEST(Synthetic, Deterministic) {
  const SynthDataset a = generate_synthetic(small(Corruption::mixed, 9));
  const SynthDataset b = generate_synthetic(small(Corruption::mixed, 9));
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].name, b.samples[i].name);
    EXPECT_EQ(a.samples[i].theta, b.samples[i].theta);
    EXPECT_TRUE(std::equal(a.samples[i].image.data().begin(), a.samples[i].image.data().end(),
                           b.samples[i].image.data().begin()));
  }
}

TEST(Synthetic, WrittenTreeLoadsBack) {
  const fs::path root = fs::temp_directory_path() / "epan_synth_tree";
  fs::remove_all(root);
  const SynthDataset d = generate_synthetic(small(Corruption::mixed, 2));
  write_synthetic(d, root);
  const MarketDataset ds = load_dataset(root);
  EXPECT_EQ(ds.counts().train, d.split(Split::train).size());
  EXPECT_EQ(ds.counts().query, d.split(Split::query).size());
  EXPECT_EQ(ds.counts().gallery, d.split(Split::gallery).size());
  EXPECT_TRUE(ds.rejects.empty());
  const auto thetas = read_thetas_csv(root / "thetas.csv");
  ASSERT_EQ(thetas.size(), d.samples.size());
  std::map<std::string, const SynthSample*> by_name;
  for (const auto& s : d.samples) by_name[s.name] = &s;
  for (const auto& t : thetas) {
    ASSERT_TRUE(by_name.count(t.filename)) << t.filename;
    EXPECT_EQ(t.theta, by_name[t.filename]->theta);
    EXPECT_EQ(t.inverse, by_name[t.filename]->inverse);
  }
  const Tensord img = load_image(root / "query" / d.split(Split::query).front()->name);
  EXPECT_LT(l2(img, d.split(Split::query).front()->image) / std::sqrt(double(img.size())), 0.5 / 255 + 1e-9);
}

TEST(Synthetic, Validation) {
  SynthSpec s;
  s.num_ids = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SynthSpec{};
  s.scale_min = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(parse_corruption("blur"), ConfigError);
  EXPECT_EQ(parse_corruption("partial_loss"), Corruption::partial_loss);
}

}  // namespace
}  // namespace epan
