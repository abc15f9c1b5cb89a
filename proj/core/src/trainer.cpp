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

#include "epan/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>

#include "epan/errors.hpp"
#include "epan/parallel.hpp"

namespace epan {

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t stream, std::size_t epoch,
                           std::size_t batch = 0, std::size_t slot = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream, static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(batch),
                    static_cast<std::uint32_t>(slot)};
  return std::mt19937_64(seq);
}

}  // namespace

PKSampler::PKSampler(std::span<const int> labels, std::size_t ids_per_batch,
                     std::size_t instances_per_id, std::uint64_t seed)
    : p_(ids_per_batch), k_(instances_per_id), seed_(seed) {
  if (p_ == 0 || k_ == 0) throw ConfigError("PK sampling needs P >= 1 and K >= 1");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  for (auto& [label, idx] : groups) by_label_.push_back(std::move(idx));
  if (by_label_.size() < p_ || labels.size() < p_ * k_) {
    throw ConfigError("dataset too small for PK sampling: " + std::to_string(labels.size()) +
                      " samples over " + std::to_string(by_label_.size()) + " ids, need P=" +
                      std::to_string(p_) + " ids and P*K=" + std::to_string(p_ * k_) + " samples");
  }
}

std::vector<std::vector<std::size_t>> PKSampler::epoch_batches(std::size_t epoch) const {
  auto rng = stream_rng(seed_, 1, epoch);
  std::vector<std::vector<std::vector<std::size_t>>> chunks(by_label_.size());
  for (std::size_t l = 0; l < by_label_.size(); ++l) {
    std::vector<std::size_t> idx = by_label_[l];
    if (idx.size() < k_) {
      std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
      while (idx.size() < k_) idx.push_back(by_label_[l][pick(rng)]);
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t s = 0; s + k_ <= idx.size(); s += k_) {
      chunks[l].emplace_back(idx.begin() + static_cast<long>(s),
                             idx.begin() + static_cast<long>(s + k_));
    }
    std::reverse(chunks[l].begin(), chunks[l].end());  // pop from the back
  }
  std::vector<std::size_t> available(by_label_.size());
  for (std::size_t l = 0; l < available.size(); ++l) available[l] = l;
  std::vector<std::vector<std::size_t>> batches;
  while (available.size() >= p_) {
    std::vector<std::size_t> chosen = available;
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(p_);
    std::vector<std::size_t> batch;
    for (std::size_t l : chosen) {
      batch.insert(batch.end(), chunks[l].back().begin(), chunks[l].back().end());
      chunks[l].pop_back();
    }
    std::erase_if(available, [&](std::size_t l) { return chunks[l].empty(); });
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::string log_csv(const TrainLog& log) {
  std::string out = "epoch,mean_loss,lr,wall_seconds\n";
  char buf[128];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.3f\n", r.epoch, r.mean_loss, r.lr,
                  r.wall_seconds);
    out += buf;
  }
  return out;
}

void write_log_csv(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << log_csv(log);
}

template <Real T>
TrainLog train(EpanModel<T>& model, const TrainingSet<T>& data, const LossConfig& loss,
               const OptimConfig& optim, const AugmentConfig& aug, const TrainHooks<T>& hooks) {
  loss.validate();
  optim.validate();
  aug.validate();
  if (data.images.size() != data.labels.size()) {
    throw UsageError("training set has " + std::to_string(data.images.size()) + " images but " +
                     std::to_string(data.labels.size()) + " labels");
  }
  TrainLog log;
  if (optim.epochs == 0) return log;
  const PKSampler sampler(data.labels, optim.ids_per_batch, optim.instances_per_id, optim.seed);
  Optimizer<T> optimizer(optim, model.parameters());
  const auto& cfg = model.config();
  const std::size_t plane = cfg.channels * cfg.height * cfg.width;

  for (std::size_t epoch = 0; epoch < optim.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, optim);
    const auto batches = sampler.epoch_batches(epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b];
      Tensor<T> images({batch.size(), cfg.channels, cfg.height, cfg.width});
      std::vector<int> targets(batch.size());
      auto dst = images.mutable_data();
      parallel_for(batch.size(), hooks.workers, [&](std::size_t i) {
        const Tensor<T>& src = data.images[batch[i]];
        if (src.size() != plane) {
          throw DimensionError("training image " + std::to_string(batch[i]) + " has shape " +
                               to_string(src.shape()));
        }
        // One seed per (epoch, batch, slot) keeps augmentation independent
        // of the worker count.
        const std::uint64_t seed = stream_rng(optim.seed, 2, epoch, b, i)();
        const Tensor<T> img = augment(src, aug, seed);
        std::copy(img.data().begin(), img.data().end(), dst.begin() + static_cast<long>(i * plane));
        targets[i] = data.labels[batch[i]];
      });

      GradientTape<T> tape;
      const ForwardOutput<T> out = model.forward(images, Mode::train);
      const Tensor<T> value =
          total_loss(out.base.logits, out.align.logits, out.fused, targets, loss);
      const double v = static_cast<double>(value.item());
      if (!std::isfinite(v)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      optimizer.zero_grad();
      tape.backward(value);
      optimizer.step(lr);
      loss_sum += v;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
    rec.lr = lr;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.push_back(rec);
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model, rec);
  }
  return log;
}

template TrainLog train<float>(EpanModel<float>&, const TrainingSet<float>&, const LossConfig&,
                               const OptimConfig&, const AugmentConfig&, const TrainHooks<float>&);
template TrainLog train<double>(EpanModel<double>&, const TrainingSet<double>&,
                                const LossConfig&, const OptimConfig&, const AugmentConfig&,
                                const TrainHooks<double>&);

}  // namespace epan
