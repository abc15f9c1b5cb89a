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
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "epan/augment.hpp"
#include "epan/losses.hpp"
#include "epan/model.hpp"
#include "epan/optim.hpp"

namespace epan {

/// Batches of P identities with K instances each. Per epoch every identity's
/// samples are shuffled and cut into groups of K (identities with fewer than
/// K samples are padded by resampling); batches draw P identities at random
/// until fewer than P identities have groups left.
class PKSampler {
 public:
  /// Throws ConfigError when there are fewer than P identities or fewer than
  /// P*K samples.
  PKSampler(std::span<const int> labels, std::size_t ids_per_batch,
            std::size_t instances_per_id, std::uint64_t seed);

  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;

 private:
  std::vector<std::vector<std::size_t>> by_label_;
  std::size_t p_, k_;
  std::uint64_t seed_;
};

template <Real T>
struct TrainingSet {
  std::vector<Tensor<T>> images;  // [3,H,W] each
  std::vector<int> labels;        // contiguous class indices
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

using TrainLog = std::vector<EpochRecord>;

/// CSV with header epoch,mean_loss,lr,wall_seconds. Losses and learning
/// rates are printed with 17 significant digits.
std::string log_csv(const TrainLog& log);
void write_log_csv(const std::filesystem::path& path, const TrainLog& log);

template <Real T>
struct TrainHooks {
  /// Called after every epoch with the 0-based epoch index.
  std::function<void(std::size_t, const EpanModel<T>&, const EpochRecord&)> on_epoch_end;
  /// Workers for batch assembly and augmentation; the model update itself
  /// is always single-threaded.
  std::size_t workers = 1;
};

/// Runs optim.epochs epochs of PK-batched training on total_loss. With zero
/// epochs the model is left untouched and the log is empty. Throws
/// ConfigError when the data cannot fill a PK batch and NumericError on a
/// non-finite loss or gradient.
template <Real T>
TrainLog train(EpanModel<T>& model, const TrainingSet<T>& data, const LossConfig& loss,
               const OptimConfig& optim, const AugmentConfig& aug,
               const TrainHooks<T>& hooks = {});

}  // namespace epan
