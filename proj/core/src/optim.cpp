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

#include "epan/optim.hpp"

#include <cmath>

#include "epan/errors.hpp"

namespace epan {

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd_momentum: return "sgd_momentum";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
  if (name == "adam") return OptimizerKind::adam;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

double OptimConfig::default_learning_rate(OptimizerKind kind) {
  return kind == OptimizerKind::sgd_momentum ? 0.05 : 3.5e-4;
}

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("optim: learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optim: momentum must be in [0,1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optim: betas must be in [0,1)");
  }
  if (!(rms_decay >= 0.0 && rms_decay < 1.0)) throw ConfigError("optim: rms_decay must be in [0,1)");
  if (step_size == 0) throw ConfigError("optim: step_size must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("optim: gamma must be in (0,1]");
  if (!(weight_decay >= 0.0)) throw ConfigError("optim: weight_decay must be >= 0");
  if (ids_per_batch < 2) throw ConfigError("optim: ids_per_batch must be >= 2");
  if (instances_per_id == 0) throw ConfigError("optim: instances_per_id must be >= 1");
  for (const auto& m : lr_multipliers) {
    if (!(m.factor >= 0.0 && std::isfinite(m.factor))) {
      throw ConfigError("optim: learning-rate multiplier for '" + m.prefix + "' must be >= 0");
    }
  }
}

double lr_at(std::size_t epoch, const OptimConfig& config) {
  return config.learning_rate *
         std::pow(config.gamma, static_cast<double>(epoch / config.step_size));
}

template <Real T>
Optimizer<T>::Optimizer(const OptimConfig& config, std::vector<NamedTensor<T>> params)
    : config_(config), params_(std::move(params)) {
  for (const auto& p : params_) {
    first_.emplace_back(p.tensor.size(), T(0));
    second_.emplace_back(p.tensor.size(), T(0));
    double scale = 1.0;
    for (const auto& m : config_.lr_multipliers) {
      if (p.name.rfind(m.prefix, 0) == 0) {
        scale = m.factor;
        break;
      }
    }
    lr_scale_.push_back(scale);
  }
}

template <Real T>
void Optimizer<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <Real T>
void Optimizer<T>::step(double learning_rate) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in parameter " + p.name);
      }
    }
  }
  ++steps_;
  const T wd = static_cast<T>(config_.weight_decay);
  const double t = static_cast<double>(steps_);
  const T bias1 = static_cast<T>(1.0 - std::pow(config_.beta1, t));
  const T bias2 = static_cast<T>(1.0 - std::pow(config_.beta2, t));

  for (std::size_t k = 0; k < params_.size(); ++k) {
    const T lr = static_cast<T>(learning_rate * lr_scale_[k]);
    auto w = params_[k].tensor.mutable_data();
    const bool has = params_[k].tensor.has_grad();
    auto& m = first_[k];
    auto& v = second_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T g = (has ? params_[k].tensor.grad()[i] : T(0)) + wd * w[i];
      switch (config_.kind) {
        case OptimizerKind::sgd_momentum: {
          m[i] = static_cast<T>(config_.momentum) * m[i] + g;
          w[i] -= lr * m[i];
          break;
        }
        case OptimizerKind::adam: {
          const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
          m[i] = b1 * m[i] + (T(1) - b1) * g;
          v[i] = b2 * v[i] + (T(1) - b2) * g * g;
          const T mhat = m[i] / bias1, vhat = v[i] / bias2;
          w[i] -= lr * mhat / (std::sqrt(vhat) + static_cast<T>(config_.adam_epsilon));
          break;
        }
        case OptimizerKind::rmsprop: {
          const T rho = static_cast<T>(config_.rms_decay);
          v[i] = rho * v[i] + (T(1) - rho) * g * g;
          w[i] -= lr * g / (std::sqrt(v[i]) + static_cast<T>(config_.rms_epsilon));
          break;
        }
      }
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace epan
