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

#include <span>

#include "epan/tensor.hpp"

namespace epan {

enum class SmoothingForm {
  /// -sum_i q_i log p_i with q_i = (1 - eps) [i == t] + eps / C.
  smoothed_targets,
  /// -log(p_t + eps / C): the offset is added inside the logarithm.
  offset_in_log,
};

struct LossConfig {
  double epsilon = 0.1;
  double margin = 0.3;
  double lambda_triplet = 1.0;
  bool label_smooth = true;
  SmoothingForm smoothing_form = SmoothingForm::smoothed_targets;
  bool squared_distances = true;

  void validate() const;  // throws ConfigError
};

/// Probabilities are clamped at this value before taking logarithms.
inline constexpr double kProbabilityFloor = 1e-12;

/// Label-smoothed cross-entropy of logits [B,C], averaged over the batch.
template <Real T>
Tensor<T> lsr_cross_entropy(const Tensor<T>& logits, std::span<const int> targets,
                            double epsilon,
                            SmoothingForm form = SmoothingForm::smoothed_targets);

/// Batch-hard triplet loss over embeddings [B,D]: for every anchor the
/// farthest same-label sample and the nearest other-label sample give
/// max(d_pos^2 - d_neg^2 + margin, 0) (or unsquared distances), averaged over
/// anchors. Throws MiningError when an anchor has no negative.
template <Real T>
Tensor<T> batch_hard_triplet(const Tensor<T>& embeddings, std::span<const int> labels,
                             double margin, bool squared = true);

/// CE(base) + CE(align) + lambda * triplet(fused). With label smoothing
/// disabled the CE terms use epsilon = 0.
template <Real T>
Tensor<T> total_loss(const Tensor<T>& base_logits, const Tensor<T>& align_logits,
                     const Tensor<T>& fused_embed, std::span<const int> targets,
                     const LossConfig& config);

}  // namespace epan
