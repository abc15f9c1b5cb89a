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

#include "epan/gradient_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>

#include "epan/affine.hpp"
#include "epan/grad_check.hpp"
#include "epan/losses.hpp"
#include "epan/model.hpp"
#include "epan/ops.hpp"

namespace epan {

namespace {

// Smallest distance, in source pixels, from a sampling point of `grid`
// [..., 2] to a pixel centre. Bilinear sampling is not differentiable there.
double pixel_centre_margin(const Tensord& grid, std::size_t src_h, std::size_t src_w) {
  auto g = grid.data();
  double margin = 1.0;
  for (std::size_t k = 0; k < g.size(); k += 2) {
    const double px = (g[k] + 1.0) * static_cast<double>(src_w - 1) / 2.0;
    const double py = (g[k + 1] + 1.0) * static_cast<double>(src_h - 1) / 2.0;
    margin = std::min({margin, std::abs(px - std::round(px)), std::abs(py - std::round(py))});
  }
  return margin;
}

// Smallest gap, over anchors, between the mined hardest positive (negative)
// squared distance and the runner-up. Batch-hard mining switches partner
// where this gap closes.
double mining_margin(const Tensord& emb, const std::vector<int>& labels) {
  const std::size_t n = emb.dim(0), d = emb.dim(1);
  auto e = emb.data();
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<double> pos, neg;
    for (std::size_t b = 0; b < n; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += (e[a * d + k] - e[b * d + k]) * (e[a * d + k] - e[b * d + k]);
      (labels[a] == labels[b] ? pos : neg).push_back(s);
    }
    std::sort(pos.begin(), pos.end(), std::greater<>());
    std::sort(neg.begin(), neg.end());
    if (pos.size() > 1) margin = std::min(margin, pos[0] - pos[1]);
    if (neg.size() > 1) margin = std::min(margin, neg[1] - neg[0]);
  }
  return margin;
}

constexpr double kPixelMargin = 1e-3;
constexpr double kMiningMargin = 1e-4;

struct Results {
  std::map<std::string, GradCase> by_name;
  std::vector<std::string> order;
};

class Suite {
 public:
  Suite(std::uint64_t seed, Results& results) : seed_(seed), rng_(seed), results_(results) {}

  Tensord normal(Shape shape, double sd = 1.0) {
    Tensord t(std::move(shape));
    std::normal_distribution<double> d(0.0, sd);
    for (auto& v : t.mutable_data()) v = d(rng_);
    return t;
  }

  // Normal entries pushed at least `gap` away from zero, for ops with a kink
  // at the origin.
  Tensord away_from_zero(Shape shape, double gap) {
    Tensord t = normal(std::move(shape));
    for (auto& v : t.mutable_data()) v += v < 0 ? -gap : gap;
    return t;
  }

  // sum(f(...) * R) with R fixed, turning a tensor-valued op into a scalar.
  std::function<Tensord(const Tensord&)> projector(const Shape& shape) {
    const Tensord weights = normal(shape);
    return [weights](const Tensord& out) { return sum(mul(out, weights)); };
  }

  void check(const std::string& name, double tolerance, const std::function<Tensord()>& loss,
             std::vector<Tensord> params, std::size_t probes = 0, double eps = 1e-5) {
    double worst = 0.0;
    for (auto& p : params) {
      worst = std::max(worst, grad_check_param(loss, p, eps, probes).max_rel_error);
    }
    auto [it, inserted] = results_.by_name.try_emplace(name);
    if (inserted) results_.order.push_back(name);
    auto& c = it->second;
    c.name = name;
    c.tolerance = tolerance;
    if (worst >= c.max_rel_error) {
      c.max_rel_error = worst;
      c.worst_seed = seed_;
    }
  }

  void primitives();
  void sampler();
  void losses();
  void model(std::size_t probes);

 private:
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  Results& results_;
};

void Suite::primitives() {
  const double tol = kPrimitiveGradTolerance;
  {
    Tensord x = normal({2, 3, 7, 6}), k = normal({4, 3, 3, 3});
    auto proj = projector({2, 4, 4, 3});
    check("conv2d stride 2 pad 1", tol, [&] { return proj(conv2d(x, k, 2, 1)); }, {x, k});
    Tensord x1 = normal({3, 5, 5}), k1 = normal({2, 3, 2, 2});
    auto proj1 = projector({2, 4, 4});
    check("conv2d unbatched", tol, [&] { return proj1(conv2d(x1, k1, 1, 0)); }, {x1, k1});
  }
  {
    Tensord x = away_from_zero({3, 5}, 0.05);
    auto proj = projector({3, 5});
    check("relu", tol, [&] { return proj(relu(x)); }, {x});
  }
  {
    Tensord x = normal({4, 5}), w = normal({3, 5}), b = normal({3});
    auto proj = projector({4, 3});
    check("linear", tol, [&] { return proj(linear(x, w, b)); }, {x, w, b});
  }
  {
    Tensord x = normal({2, 3, 4, 6});
    auto proj = projector({2, 3, 2, 3});
    check("avg_pool2d", tol, [&] { return proj(avg_pool2d(x, 2)); }, {x});
    check("max_pool2d", tol, [&] { return proj(max_pool2d(x, 2)); }, {x});
    auto gproj = projector({2, 3});
    check("global_avg_pool", tol, [&] { return gproj(global_avg_pool(x)); }, {x});
  }
  {
    Tensord x = normal({4, 3, 3, 2}), g = normal({3}), b = normal({3});
    auto proj = projector({4, 3, 3, 2});
    NormStats<double> stats(3);
    check("batch_norm train", tol, [&] { return proj(batch_norm(x, g, b, stats, true)); },
          {x, g, b});
    NormStats<double> fixed(3);
    for (auto& v : fixed.running_mean) v = 0.3;
    for (auto& v : fixed.running_var) v = 1.7;
    check("batch_norm eval", tol, [&] { return proj(batch_norm(x, g, b, fixed, false)); },
          {x, g, b});
    Tensord x2 = normal({5, 4}), g2 = normal({4}), b2 = normal({4});
    NormStats<double> stats2(4);
    auto proj2 = projector({5, 4});
    check("batch_norm 2d", tol, [&] { return proj2(batch_norm(x2, g2, b2, stats2, true)); },
          {x2, g2, b2});
    check("instance_norm", tol, [&] { return proj(instance_norm(x, g, b)); }, {x, g, b});
  }
  {
    Tensord x = normal({3, 5});
    auto proj = projector({3, 5});
    check("softmax", tol, [&] { return proj(softmax(x)); }, {x});
    Tensord y = normal({3, 5});
    check("add", tol, [&] { return proj(add(x, y)); }, {x, y});
    check("mul", tol, [&] { return proj(mul(x, y)); }, {x, y});
    check("scale", tol, [&] { return proj(scale(x, 0.7)); }, {x});
    check("sum", tol, [&] { return sum(mul(x, x)); }, {x});
    check("mean", tol, [&] { return mean(mul(x, y)); }, {x, y});
    Tensord z = normal({3, 2});
    auto cproj = projector({3, 7});
    check("concat", tol, [&] { return cproj(concat<double>({x, z}, 1)); }, {x, z});
    auto rproj = projector({5, 3});
    check("reshape", tol, [&] { return rproj(reshape(x, {5, 3})); }, {x});
    check("l2_normalize", tol, [&] { return proj(l2_normalize(x)); }, {x});
  }
}

void Suite::sampler() {
  const double tol = kPrimitiveGradTolerance;
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  std::vector<AffineParams> rows(2);
  // Redraw until no sampling point sits on a pixel centre of the 6x7 input.
  do {
    for (auto& r : rows) {
      r = AffineParams::scale_translate(0.8 + jitter(rng_), 0.8 + jitter(rng_), jitter(rng_),
                                        jitter(rng_));
      r.theta[1] = jitter(rng_) * 0.5;
      r.theta[3] = jitter(rng_) * 0.5;
    }
  } while (pixel_centre_margin(make_grid(theta_tensor<double>(rows), 5, 6), 6, 7) < kPixelMargin);
  Tensord theta = theta_tensor<double>(rows);
  auto gproj = projector({2, 5, 6, 2});
  check("make_grid theta", tol, [&] { return gproj(make_grid(theta, 5, 6)); }, {theta});

  Tensord input = normal({2, 3, 6, 7});
  auto wproj = projector({2, 3, 5, 6});
  check("grid_sample input", tol, [&] { return wproj(affine_warp(input, theta, 5, 6)); },
        {input});
  check("affine_warp theta", tol, [&] { return wproj(affine_warp(input, theta, 5, 6)); },
        {theta});
  Tensord grid = make_grid(theta, 5, 6).detach();
  check("grid_sample grid", tol, [&] { return wproj(grid_sample(input, grid)); }, {grid});
}

void Suite::losses() {
  const double tol = kPrimitiveGradTolerance;
  const std::vector<int> targets{0, 2, 1, 2, 0, 1};
  Tensord logits = normal({6, 3}, 2.0);
  check("lsr_cross_entropy", tol,
        [&] { return lsr_cross_entropy(logits, targets, 0.1); }, {logits});
  check("lsr_cross_entropy offset_in_log", tol,
        [&] { return lsr_cross_entropy(logits, targets, 0.1, SmoothingForm::offset_in_log); },
        {logits});
  Tensord emb = normal({6, 4});
  check("batch_hard_triplet squared", tol,
        [&] { return batch_hard_triplet(emb, targets, 0.3, true); }, {emb});
  check("batch_hard_triplet", tol, [&] { return batch_hard_triplet(emb, targets, 0.3, false); },
        {emb});
  Tensord align = normal({6, 3}, 2.0);
  Tensord fused = l2_normalize(normal({6, 8})).detach();
  LossConfig cfg;
  check("total_loss", tol, [&] { return total_loss(logits, align, fused, targets, cfg); },
        {logits, align, fused});
}

void Suite::model(std::size_t probes) {
  ModelConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.stage_channels = {4, 6, 8, 8};
  cfg.num_classes = 2;
  cfg.embed_dim = 6;
  cfg.grid_channels = 6;
  cfg.ibn = seed_ % 2 == 1;
  EpanModel<double> model(cfg, seed_);
  // A zero grid head would leave the grid block with identically zero
  // gradients, so it gets small weights. The bias scales by 0.9, which keeps
  // every sampling point at least 0.05 px away from a pixel centre, where
  // bilinear interpolation is not differentiable.
  std::normal_distribution<double> small(0.0, 1e-4);
  for (auto& p : model.parameters()) {
    if (p.name == "grid.fc.weight") {
      for (auto& v : p.tensor.mutable_data()) v = small(rng_);
    } else if (p.name == "grid.fc.bias") {
      p.tensor.mutable_data()[0] = 0.9;
      p.tensor.mutable_data()[4] = 0.9;
    }
  }
  const std::vector<int> targets{0, 0, 0, 1, 1, 1};
  LossConfig loss;
  Tensord images({6, 3, 16, 16});
  auto fn = [&] {
    auto out = model.forward(images, Mode::train);
    return total_loss(out.base.logits, out.align.logits, out.fused, targets, loss);
  };
  // Draw smooth images (white noise puts a bilinear kink between every pair
  // of pixels) until the loss is differentiable with room to spare: no
  // sampling point near a pixel centre and no near-tie in triplet mining.
  for (int attempt = 0;; ++attempt) {
    std::normal_distribution<double> d(0.0, 0.5);
    std::uniform_real_distribution<double> freq(0.1, 0.4), phase(0.0, 6.3);
    auto px = images.mutable_data();
    for (std::size_t plane = 0; plane < 18; ++plane) {
      const double a = d(rng_), b = d(rng_), fx = freq(rng_), fy = freq(rng_);
      const double px0 = phase(rng_), py0 = phase(rng_);
      for (std::size_t y = 0; y < 16; ++y) {
        for (std::size_t x = 0; x < 16; ++x) {
          px[plane * 256 + y * 16 + x] = a * std::sin(fx * static_cast<double>(x) + px0) +
                                          b * std::cos(fy * static_cast<double>(y) + py0);
        }
      }
    }
    const auto out = model.forward(images, Mode::train);
    const double pixel = pixel_centre_margin(make_grid(out.theta.detach(), 16, 16), 16, 16);
    const double mining = mining_margin(out.fused.detach(), targets);
    if ((pixel > kPixelMargin && mining > kMiningMargin) || attempt == 99) break;
  }
  std::vector<Tensord> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  // A much smaller step than for the primitives. Every probe moves thousands
  // of ReLU inputs at once, and the number of kinks it straddles grows with
  // the step; at 1e-8 the double-precision rounding floor is still ~1e-6.
  check("model total_loss", kModelGradTolerance, fn, params, probes, 1e-8);
}

}  // namespace

bool GradSuiteReport::passed() const {
  for (const auto& c : cases) {
    if (!c.passed()) return false;
  }
  return !cases.empty();
}

GradSuiteReport run_gradient_suite(const GradSuiteOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Results results;
  for (std::size_t s = 0; s < options.seeds; ++s) {
    Suite suite(options.first_seed + s, results);
    suite.primitives();
    suite.sampler();
    suite.losses();
    if (options.include_model) suite.model(options.model_probes);
  }
  GradSuiteReport report;
  for (const auto& name : results.order) report.cases.push_back(results.by_name.at(name));
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace epan
