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

#include "epan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "epan/errors.hpp"
#include "epan/ops.hpp"

namespace epan {

void LossConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("loss: epsilon must be in [0,1)");
  if (!(margin >= 0.0)) throw ConfigError("loss: margin must be >= 0");
  if (!(lambda_triplet >= 0.0)) throw ConfigError("loss: lambda_triplet must be >= 0");
}

template <Real T>
Tensor<T> lsr_cross_entropy(const Tensor<T>& logits, std::span<const int> targets,
                            double epsilon, SmoothingForm form) {
  if (logits.rank() != 2) {
    throw DimensionError("lsr_cross_entropy: logits must be [B,C], got " +
                         to_string(logits.shape()));
  }
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (targets.size() != b) throw DimensionError("lsr_cross_entropy: target count mismatch");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw UsageError("lsr_cross_entropy: epsilon must be in [0,1)");
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw UsageError("lsr_cross_entropy: target " + std::to_string(t) + " outside [0," +
                       std::to_string(c) + ")");
    }
  }
  const double floor_log = std::log(kProbabilityFloor);
  const double uniform = epsilon / static_cast<double>(c);
  const auto z = logits.data();

  // Per-row gradient w.r.t. the logits, scaled by 1/B.
  std::vector<T> dz(b * c);
  double total = 0;
  std::vector<double> p(c), logp(c);
  for (std::size_t r = 0; r < b; ++r) {
    const T* row = z.data() + r * c;
    const double zmax = *std::max_element(row, row + c);
    double s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(double(row[j]) - zmax);
    const double lse = zmax + std::log(s);
    for (std::size_t j = 0; j < c; ++j) {
      logp[j] = double(row[j]) - lse;
      p[j] = std::exp(logp[j]);
    }
    const std::size_t t = static_cast<std::size_t>(targets[r]);
    T* g = dz.data() + r * c;
    if (form == SmoothingForm::smoothed_targets) {
      double loss = 0, active_mass = 0;
      for (std::size_t i = 0; i < c; ++i) {
        const double q = (i == t ? 1.0 - epsilon : 0.0) + uniform;
        const bool clamped = logp[i] < floor_log;
        loss -= q * (clamped ? floor_log : logp[i]);
        if (!clamped) active_mass += q;
      }
      for (std::size_t j = 0; j < c; ++j) {
        const double q = (j == t ? 1.0 - epsilon : 0.0) + uniform;
        const bool clamped = logp[j] < floor_log;
        g[j] = static_cast<T>((p[j] * active_mass - (clamped ? 0.0 : q)) / static_cast<double>(b));
      }
      total += loss;
    } else {
      const double shifted = p[t] + uniform;
      const bool clamped = shifted < kProbabilityFloor;
      total -= std::log(clamped ? kProbabilityFloor : shifted);
      for (std::size_t j = 0; j < c; ++j) {
        const double dpt = p[t] * ((j == t ? 1.0 : 0.0) - p[j]);
        g[j] = clamped ? T(0) : static_cast<T>(-dpt / shifted / static_cast<double>(b));
      }
    }
  }
  Tensor<T> result(Shape{}, std::vector<T>{static_cast<T>(total / static_cast<double>(b))});
  if (detail::should_record<T>({&logits})) {
    auto* xs = logits.storage().get();
    auto* ys = result.storage().get();
    GradientTape<T>::active()->record("lsr_cross_entropy", {logits.storage()}, result.storage(),
                                      [xs, ys, dz = std::move(dz)]() {
                                        auto& d = detail::grad_of(*xs);
                                        const T up = ys->grad[0];
                                        for (std::size_t i = 0; i < d.size(); ++i) d[i] += up * dz[i];
                                      });
  }
  return result;
}

template <Real T>
Tensor<T> batch_hard_triplet(const Tensor<T>& embeddings, std::span<const int> labels,
                             double margin, bool squared) {
  if (embeddings.rank() != 2) {
    throw DimensionError("batch_hard_triplet: embeddings must be [B,D], got " +
                         to_string(embeddings.shape()));
  }
  const std::size_t b = embeddings.dim(0), d = embeddings.dim(1);
  if (labels.size() != b) throw DimensionError("batch_hard_triplet: label count mismatch");
  const auto e = embeddings.data();

  std::vector<double> d2(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = double(e[i * d + k]) - double(e[j * d + k]);
        acc += diff * diff;
      }
      d2[i * b + j] = d2[j * b + i] = acc;
    }
  }
  constexpr double kMinDistSq = 1e-12;
  auto dist = [&](double sq) { return squared ? sq : std::sqrt(std::max(sq, kMinDistSq)); };

  struct Triplet {
    std::size_t anchor, pos, neg;
    double dp, dn;
  };
  std::vector<Triplet> active;
  double mean = 0;
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t pos = i, neg = b;
    for (std::size_t j = 0; j < b; ++j) {
      if (labels[j] == labels[i]) {
        if (d2[i * b + j] > d2[i * b + pos]) pos = j;
      } else if (neg == b || d2[i * b + j] < d2[i * b + neg]) {
        neg = j;
      }
    }
    if (neg == b) {
      throw MiningError("batch_hard_triplet: anchor " + std::to_string(i) + " (label " +
                        std::to_string(labels[i]) + ") has no negative in the batch");
    }
    const double dp = dist(d2[i * b + pos]), dn = dist(d2[i * b + neg]);
    const double term = std::max(dp - dn + margin, 0.0);
    // Running mean: a batch of identical terms averages to that term exactly.
    mean += (term - mean) / static_cast<double>(i + 1);
    if (term > 0) active.push_back({i, pos, neg, dp, dn});
  }
  Tensor<T> result(Shape{}, std::vector<T>{static_cast<T>(mean)});
  if (detail::should_record<T>({&embeddings})) {
    auto* xs = embeddings.storage().get();
    auto* ys = result.storage().get();
    GradientTape<T>::active()->record(
        "batch_hard_triplet", {embeddings.storage()}, result.storage(),
        [xs, ys, b, d, squared, active = std::move(active)]() {
          auto& g = detail::grad_of(*xs);
          const double up = double(ys->grad[0]) / static_cast<double>(b);
          const auto& e = xs->data;
          for (const auto& t : active) {
            // d(dist)/d(anchor) along (a - x): 2 for squared distance,
            // 1/dist for the plain distance.
            const double kp = squared ? 2.0 : 1.0 / t.dp;
            const double kn = squared ? 2.0 : 1.0 / t.dn;
            for (std::size_t k = 0; k < d; ++k) {
              const double ap = double(e[t.anchor * d + k]) - double(e[t.pos * d + k]);
              const double an = double(e[t.anchor * d + k]) - double(e[t.neg * d + k]);
              g[t.anchor * d + k] += static_cast<T>(up * (kp * ap - kn * an));
              g[t.pos * d + k] += static_cast<T>(-up * kp * ap);
              g[t.neg * d + k] += static_cast<T>(up * kn * an);
            }
          }
        });
  }
  return result;
}

template <Real T>
Tensor<T> total_loss(const Tensor<T>& base_logits, const Tensor<T>& align_logits,
                     const Tensor<T>& fused_embed, std::span<const int> targets,
                     const LossConfig& config) {
  const double eps = config.label_smooth ? config.epsilon : 0.0;
  Tensor<T> loss = add(lsr_cross_entropy(base_logits, targets, eps, config.smoothing_form),
                       lsr_cross_entropy(align_logits, targets, eps, config.smoothing_form));
  if (config.lambda_triplet > 0.0) {
    Tensor<T> tri =
        batch_hard_triplet(fused_embed, targets, config.margin, config.squared_distances);
    loss = add(loss, scale(tri, static_cast<T>(config.lambda_triplet)));
  }
  return loss;
}

#define EPAN_INSTANTIATE_LOSSES(T)                                                          \
  template Tensor<T> lsr_cross_entropy(const Tensor<T>&, std::span<const int>, double,     \
                                       SmoothingForm);                                     \
  template Tensor<T> batch_hard_triplet(const Tensor<T>&, std::span<const int>, double, bool); \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                std::span<const int>, const LossConfig&);

EPAN_INSTANTIATE_LOSSES(float)
EPAN_INSTANTIATE_LOSSES(double)

}  // namespace epan
