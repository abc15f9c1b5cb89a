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
#include <string>
#include <string_view>
#include <vector>

#include "epan/tensor.hpp"

namespace epan {

enum class OptimizerKind { sgd_momentum, adam, rmsprop };

/// Scales the learning rate of every parameter whose name starts with
/// `prefix`. The first matching entry wins.
struct LrMultiplier {
  std::string prefix;
  double factor = 1.0;
};

std::string_view to_string(OptimizerKind kind);
/// Throws ConfigError for unknown names.
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 3.5e-4;
  double momentum = 0.9;  // sgd_momentum
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;   // adam
  double adam_epsilon = 1e-8;
  double rms_decay = 0.99;  // rmsprop
  double rms_epsilon = 1e-8;
  std::size_t step_size = 40;  // epochs between learning-rate decays
  double gamma = 0.1;          // decay factor
  double weight_decay = 5e-4;
  std::size_t epochs = 30;
  std::size_t ids_per_batch = 4;     // P
  std::size_t instances_per_id = 4;  // K
  std::uint64_t seed = 0;
  std::vector<LrMultiplier> lr_multipliers;

  void validate() const;  // throws ConfigError
  static double default_learning_rate(OptimizerKind kind);
};

/// learning_rate * gamma^floor(epoch / step_size).
double lr_at(std::size_t epoch, const OptimConfig& config);

/// First-order optimizers over a fixed list of parameters. Weight decay is an
/// L2 term added to every gradient before the update rule.
template <Real T>
class Optimizer {
 public:
  Optimizer(const OptimConfig& config, std::vector<NamedTensor<T>> params);

  /// Applies one update from the parameters' current gradients. Missing
  /// gradients count as zero. When any gradient is non-finite no parameter
  /// changes and NumericError names the offending parameter.
  void step(double learning_rate);
  void zero_grad();
  std::size_t steps() const { return steps_; }

 private:
  OptimConfig config_;
  std::vector<NamedTensor<T>> params_;
  std::vector<std::vector<T>> first_;   // momentum / adam m
  std::vector<std::vector<T>> second_;  // adam v / rmsprop accumulator
  std::vector<double> lr_scale_;
  std::size_t steps_ = 0;
};

}  // namespace epan
