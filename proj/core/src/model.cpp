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

#include "epan/model.hpp"

#include <cmath>
#include <random>

#include "epan/errors.hpp"

namespace epan {

void ModelConfig::validate() const {
  if (channels == 0) throw ConfigError("model: channels must be positive");
  if (height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0) {
    throw ConfigError("model: input height and width must be positive multiples of 16, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  for (auto c : stage_channels) {
    if (c == 0) throw ConfigError("model: stage channels must be positive");
  }
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (embed_dim == 0 || grid_channels == 0) {
    throw ConfigError("model: embed_dim and grid_channels must be positive");
  }
}

ModelConfig ModelConfig::full_resolution(std::size_t num_classes) {
  ModelConfig cfg;
  cfg.height = 224;
  cfg.width = 224;
  cfg.num_classes = num_classes;
  return cfg;
}

template <Real T>
Tensor<T> Norm<T>::operator()(const Tensor<T>& x, Mode mode) {
  if (instance) return instance_norm(x, gamma, beta);
  return batch_norm(x, gamma, beta, stats, mode == Mode::train);
}

template <Real T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> out = relu(norm1(conv2d(x, conv1, stride, 1), mode));
  out = norm2(conv2d(out, conv2, 1, 1), mode);
  Tensor<T> skip = shortcut.defined() ? norm_shortcut(conv2d(x, shortcut, stride, 0), mode) : x;
  return relu(add(out, skip));
}

namespace {

template <Real T>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor<T> normal(Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<T> values(element_count(shape));
    for (auto& v : values) v = static_cast<T>(dist(rng_));
    return Tensor<T>(std::move(shape), std::move(values)).set_requires_grad(true);
  }

  Tensor<T> conv(std::size_t out, std::size_t in, std::size_t k) {
    return normal({out, in, k, k}, std::sqrt(2.0 / static_cast<double>(in * k * k)));
  }

  static Tensor<T> constant(Shape shape, T value) {
    Tensor<T> t(std::move(shape), value);
    t.set_requires_grad(true);
    return t;
  }

  static Norm<T> norm(std::size_t c, bool instance) {
    Norm<T> n;
    n.gamma = constant({c}, T(1));
    n.beta = constant({c}, T(0));
    n.stats = NormStats<T>(c);
    n.instance = instance;
    return n;
  }

  ResBlock<T> block(std::size_t in, std::size_t out, std::size_t stride, bool instance) {
    ResBlock<T> b;
    b.stride = stride;
    b.conv1 = conv(out, in, 3);
    b.norm1 = norm(out, instance);
    b.conv2 = conv(out, out, 3);
    b.norm2 = norm(out, instance);
    if (stride != 1 || in != out) {
      b.shortcut = conv(out, in, 1);
      b.norm_shortcut = norm(out, instance);
    }
    return b;
  }

  Trunk<T> trunk(const ModelConfig& cfg) {
    Trunk<T> t;
    std::size_t in = cfg.channels;
    for (std::size_t s = 0; s < 4; ++s) {
      t.stages[s] = block(in, cfg.stage_channels[s], 2, cfg.ibn && s < 2);
      in = cfg.stage_channels[s];
    }
    return t;
  }

  Head<T> head(const ModelConfig& cfg) {
    Head<T> h;
    const std::size_t feat = cfg.stage_channels[3];
    h.embed_weight = normal({cfg.embed_dim, feat}, std::sqrt(2.0 / static_cast<double>(feat)));
    h.embed_bias = constant({cfg.embed_dim}, T(0));
    h.classifier_weight = normal({cfg.num_classes, cfg.embed_dim}, 0.01);
    h.classifier_bias = constant({cfg.num_classes}, T(0));
    return h;
  }

  GridNet<T> grid(const ModelConfig& cfg) {
    GridNet<T> g;
    g.block = block(cfg.stage_channels[1] + cfg.stage_channels[3], cfg.grid_channels, 1, false);
    // Zero weights and an identity bias: the regressed warp starts as the
    // identity regardless of the input.
    g.fc_weight = constant({6, cfg.grid_channels}, T(0));
    g.fc_bias = Tensor<T>(Shape{6}, {T(1), T(0), T(0), T(0), T(1), T(0)});
    g.fc_bias.set_requires_grad(true);
    return g;
  }

 private:
  std::mt19937_64 rng_;
};

template <Real T>
void add_block(const std::string& prefix, const ResBlock<T>& b,
               std::vector<NamedTensor<T>>* params,
               std::vector<std::pair<std::string, NormStats<T>*>>* stats) {
  auto add_norm = [&](const std::string& name, const Norm<T>& n) {
    if (params) {
      params->push_back({name + ".gamma", n.gamma});
      params->push_back({name + ".beta", n.beta});
    }
    if (stats && !n.instance) stats->push_back({name, const_cast<NormStats<T>*>(&n.stats)});
  };
  if (params) params->push_back({prefix + ".conv1", b.conv1});
  add_norm(prefix + ".norm1", b.norm1);
  if (params) params->push_back({prefix + ".conv2", b.conv2});
  add_norm(prefix + ".norm2", b.norm2);
  if (b.shortcut.defined()) {
    if (params) params->push_back({prefix + ".shortcut", b.shortcut});
    add_norm(prefix + ".norm_shortcut", b.norm_shortcut);
  }
}

template <Real T>
Tensor<T> run_head(const Head<T>& head, const Tensor<T>& features, Tensor<T>* embed) {
  *embed = linear(global_avg_pool(features), head.embed_weight, head.embed_bias);
  return linear(*embed, head.classifier_weight, head.classifier_bias);
}

}  // namespace

template <Real T>
EpanModel<T>::EpanModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Initializer<T> init(seed);
  base_trunk_ = init.trunk(config_);
  base_head_ = init.head(config_);
  grid_ = init.grid(config_);
  align_trunk_ = init.trunk(config_);
  align_head_ = init.head(config_);
}

template <Real T>
Tensor<T> EpanModel<T>::batched(const Tensor<T>& images) const {
  Tensor<T> x = images;
  if (images.rank() == 3) x = reshape(images, Shape{1, images.dim(0), images.dim(1), images.dim(2)});
  if (x.rank() != 4 || x.dim(1) != config_.channels || x.dim(2) != config_.height ||
      x.dim(3) != config_.width) {
    throw DimensionError("model expects [N," + std::to_string(config_.channels) + "," +
                         std::to_string(config_.height) + "," + std::to_string(config_.width) +
                         "] input, got " + to_string(images.shape()));
  }
  return x;
}

template <Real T>
BaseOutput<T> EpanModel<T>::base_forward(const Tensor<T>& images, Mode mode) {
  Tensor<T> x = batched(images);
  BaseOutput<T> out;
  for (std::size_t s = 0; s < 4; ++s) {
    x = base_trunk_.stages[s].forward(x, mode);
    if (s == 1) out.tap2 = x;
  }
  out.tap4 = x;
  out.logits = run_head(base_head_, x, &out.embed);
  return out;
}

template <Real T>
Tensor<T> EpanModel<T>::grid_network(const Tensor<T>& tap2, const Tensor<T>& tap4, Mode mode) {
  if (tap2.rank() != 4 || tap4.rank() != 4 || tap2.dim(0) != tap4.dim(0) ||
      tap2.dim(2) % tap4.dim(2) != 0 || tap2.dim(2) / tap4.dim(2) != tap2.dim(3) / tap4.dim(3)) {
    throw DimensionError("grid_network: incompatible taps " + to_string(tap2.shape()) + " and " +
                         to_string(tap4.shape()));
  }
  const std::size_t factor = tap2.dim(2) / tap4.dim(2);
  Tensor<T> shallow = factor > 1 ? avg_pool2d(tap2, factor) : tap2;
  Tensor<T> fused = concat<T>({shallow, tap4}, 1);
  Tensor<T> h = global_avg_pool(grid_.block.forward(fused, mode));
  return linear(h, grid_.fc_weight, grid_.fc_bias);
}

template <Real T>
AlignOutput<T> EpanModel<T>::align_forward(const Tensor<T>& images, const Tensor<T>& theta,
                                           Mode mode) {
  Tensor<T> x = batched(images);
  AlignOutput<T> out;
  out.warped = theta.defined() ? affine_warp(x, theta, config_.height, config_.width) : x;
  Tensor<T> h = out.warped;
  for (std::size_t s = 0; s < 4; ++s) {
    h = align_trunk_.stages[s].forward(h, mode);
    if (s == 1) out.stage2 = h;
  }
  out.logits = run_head(align_head_, h, &out.embed);
  return out;
}

template <Real T>
ForwardOutput<T> EpanModel<T>::forward(const Tensor<T>& images, Mode mode) {
  Tensor<T> x = batched(images);
  ForwardOutput<T> out;
  out.base = base_forward(x, mode);
  if (config_.affine) {
    out.theta = grid_network(out.base.tap2, out.base.tap4, mode);
    out.align = align_forward(x, out.theta, mode);
  } else {
    std::vector<AffineParams> ids(x.dim(0));
    out.theta = theta_tensor<T>(ids);
    out.align = align_forward(x, Tensor<T>(), mode);
  }
  out.fused = l2_normalize(
      concat<T>({l2_normalize(out.base.embed), l2_normalize(out.align.embed)}, 1));
  return out;
}

template <Real T>
Tensor<T> EpanModel<T>::infer_embedding(const Tensor<T>& images) {
  return forward(images, Mode::eval).fused.detach();
}

template <Real T>
Tensor<T> EpanModel<T>::align_embedding(const Tensor<T>& images, const Tensor<T>& theta) {
  return align_forward(images, theta, Mode::eval).embed.detach();
}

template <Real T>
void EpanModel<T>::collect(std::vector<NamedTensor<T>>* params,
                           std::vector<StatsRef>* stats) const {
  auto trunk = [&](const std::string& prefix, const Trunk<T>& t) {
    for (std::size_t s = 0; s < 4; ++s) {
      add_block(prefix + ".stage" + std::to_string(s + 1), t.stages[s], params, stats);
    }
  };
  auto head = [&](const std::string& prefix, const Head<T>& h) {
    if (!params) return;
    params->push_back({prefix + ".embed.weight", h.embed_weight});
    params->push_back({prefix + ".embed.bias", h.embed_bias});
    params->push_back({prefix + ".classifier.weight", h.classifier_weight});
    params->push_back({prefix + ".classifier.bias", h.classifier_bias});
  };
  trunk("base", base_trunk_);
  head("base.head", base_head_);
  add_block("grid.block", grid_.block, params, stats);
  if (params) {
    params->push_back({"grid.fc.weight", grid_.fc_weight});
    params->push_back({"grid.fc.bias", grid_.fc_bias});
  }
  trunk("align", align_trunk_);
  head("align.head", align_head_);
}

template <Real T>
std::vector<NamedTensor<T>> EpanModel<T>::parameters() const {
  std::vector<NamedTensor<T>> params;
  collect(&params, nullptr);
  return params;
}

template <Real T>
std::vector<NamedTensor<T>> EpanModel<T>::state() const {
  std::vector<NamedTensor<T>> out = parameters();
  std::vector<StatsRef> stats;
  collect(nullptr, &stats);
  for (const auto& [name, s] : stats) {
    const std::size_t c = s->running_mean.size();
    out.push_back({name + ".running_mean", Tensor<T>(Shape{c}, s->running_mean)});
    out.push_back({name + ".running_var", Tensor<T>(Shape{c}, s->running_var)});
  }
  return out;
}

template <Real T>
void EpanModel<T>::set_state_from(const std::vector<NamedTensor<double>>& values) {
  std::vector<NamedTensor<T>> params;
  std::vector<StatsRef> stats;
  collect(&params, &stats);
  std::size_t k = 0;
  auto next = [&](const std::string& name, const Shape& shape) -> const Tensor<double>& {
    if (k >= values.size()) throw ConfigError("model state: missing entry " + name);
    const auto& v = values[k++];
    if (v.name != name) {
      throw ConfigError("model state: expected entry " + name + ", found " + v.name);
    }
    if (v.tensor.shape() != shape) {
      throw ConfigError("model state: " + name + " has shape " + to_string(v.tensor.shape()) +
                        ", model expects " + to_string(shape));
    }
    return v.tensor;
  };
  for (auto& p : params) {
    const auto& src = next(p.name, p.tensor.shape());
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }
  for (auto& [name, s] : stats) {
    const Shape shape{s->running_mean.size()};
    const auto& mean = next(name + ".running_mean", shape);
    const auto& var = next(name + ".running_var", shape);
    for (std::size_t i = 0; i < shape[0]; ++i) {
      s->running_mean[i] = static_cast<T>(mean[i]);
      s->running_var[i] = static_cast<T>(var[i]);
    }
  }
  if (k != values.size()) {
    throw ConfigError("model state: unexpected entry " + values[k].name);
  }
}

template <Real T>
template <Real U>
EpanModel<U> EpanModel<T>::cast() const {
  EpanModel<U> out(config_, 0);
  std::vector<NamedTensor<double>> values;
  for (const auto& [name, t] : state()) values.push_back({name, t.template cast<double>()});
  out.set_state_from(values);
  return out;
}

template struct Norm<float>;
template struct Norm<double>;
template struct ResBlock<float>;
template struct ResBlock<double>;
template class EpanModel<float>;
template class EpanModel<double>;
template EpanModel<double> EpanModel<float>::cast<double>() const;
template EpanModel<float> EpanModel<double>::cast<float>() const;
template EpanModel<float> EpanModel<float>::cast<float>() const;
template EpanModel<double> EpanModel<double>::cast<double>() const;

}  // namespace epan
