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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "epan/affine.hpp"
#include "epan/ops.hpp"
#include "epan/tensor.hpp"

namespace epan {

struct ModelConfig {
  std::size_t channels = 3;
  std::size_t height = 64;
  std::size_t width = 64;
  /// Output channels of the four stride-2 residual stages.
  std::array<std::size_t, 4> stage_channels{16, 32, 64, 128};
  std::size_t num_classes = 10;
  std::size_t embed_dim = 64;
  /// Width of the grid network's residual block.
  std::size_t grid_channels = 64;
  /// Instance norm instead of batch norm in stages 1 and 2 of both trunks.
  bool ibn = false;
  /// When false the grid network is bypassed and the alignment branch sees
  /// the raw image.
  bool affine = true;

  /// Throws ConfigError unless H and W are divisible by 16, every width is
  /// positive, and there are at least two classes.
  void validate() const;

  /// The 3x224x224 input of the full-size network; channels stay toy-sized.
  static ModelConfig full_resolution(std::size_t num_classes);
};

enum class Mode { train, eval };

template <Real T>
struct Norm {
  Tensor<T> gamma;
  Tensor<T> beta;
  NormStats<T> stats;
  bool instance = false;

  Tensor<T> operator()(const Tensor<T>& x, Mode mode);
};

template <Real T>
struct ResBlock {
  Tensor<T> conv1, conv2, shortcut;  // shortcut undefined for identity skips
  Norm<T> norm1, norm2, norm_shortcut;
  std::size_t stride = 1;

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
};

template <Real T>
struct Trunk {
  std::array<ResBlock<T>, 4> stages;
};

template <Real T>
struct Head {
  Tensor<T> embed_weight, embed_bias;
  Tensor<T> classifier_weight, classifier_bias;
};

template <Real T>
struct GridNet {
  ResBlock<T> block;
  Tensor<T> fc_weight, fc_bias;
};

template <Real T>
struct BaseOutput {
  Tensor<T> tap2;    // [N, c2, H/4, W/4]
  Tensor<T> tap4;    // [N, c4, H/16, W/16]
  Tensor<T> logits;  // [N, C]
  Tensor<T> embed;   // [N, embed_dim]
};

template <Real T>
struct AlignOutput {
  Tensor<T> warped;  // alignment-branch input [N,3,H,W]
  Tensor<T> stage2;  // alignment trunk stage-2 features
  Tensor<T> logits;
  Tensor<T> embed;
};

template <Real T>
struct ForwardOutput {
  BaseOutput<T> base;
  Tensor<T> theta;  // [N,6]
  AlignOutput<T> align;
  Tensor<T> fused;  // [N, 2*embed_dim], unit rows
};

/// The dual-branch recognizer: a base trunk and head, a grid network that
/// regresses an affine theta from the base trunk's stage-2 and stage-4
/// features, and an alignment trunk and head that classify the warped input.
///
/// Inputs are [N,3,H,W] batches; a single [3,H,W] image is accepted and
/// treated as N = 1. Evaluation-mode forwards never mutate the model and may
/// run concurrently.
template <Real T>
class EpanModel {
 public:
  EpanModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  BaseOutput<T> base_forward(const Tensor<T>& images, Mode mode);
  /// theta [N,6]. Exactly the identity for every input at initialization.
  Tensor<T> grid_network(const Tensor<T>& tap2, const Tensor<T>& tap4, Mode mode);
  AlignOutput<T> align_forward(const Tensor<T>& images, const Tensor<T>& theta, Mode mode);
  ForwardOutput<T> forward(const Tensor<T>& images, Mode mode);

  /// Unit-norm descriptor [N, 2*embed_dim] in evaluation mode.
  Tensor<T> infer_embedding(const Tensor<T>& images);
  /// Alignment-branch embedding under a caller-supplied theta [N,6].
  Tensor<T> align_embedding(const Tensor<T>& images, const Tensor<T>& theta);

  /// Learnable tensors in a fixed order. Shallow handles: updating them
  /// updates the model.
  std::vector<NamedTensor<T>> parameters() const;
  /// Learnable tensors (shallow) followed by copies of the batch-norm
  /// running statistics.
  std::vector<NamedTensor<T>> state() const;
  void set_state_from(const std::vector<NamedTensor<double>>& values);

  template <Real U>
  EpanModel<U> cast() const;

 private:
  Tensor<T> batched(const Tensor<T>& images) const;
  using StatsRef = std::pair<std::string, NormStats<T>*>;
  void collect(std::vector<NamedTensor<T>>* params, std::vector<StatsRef>* stats) const;

  ModelConfig config_;
  Trunk<T> base_trunk_;
  Head<T> base_head_;
  GridNet<T> grid_;
  Trunk<T> align_trunk_;
  Head<T> align_head_;

  template <Real U>
  friend class EpanModel;
};

/// Checkpoint: `<stem>.eptn` holds one EPTN record per state tensor, and
/// `<stem>.index` lists `name<TAB>shape<TAB>byte offset` per record.
template <Real T>
void save_checkpoint(const EpanModel<T>& model, const std::filesystem::path& stem);

/// Loads values into a model built from the matching config. Throws
/// ConfigError when a file is missing or a shape disagrees, FormatError on a
/// damaged file.
template <Real T>
void load_checkpoint(EpanModel<T>& model, const std::filesystem::path& stem);

/// Names and shapes listed in a checkpoint index, in file order.
std::vector<std::pair<std::string, Shape>> checkpoint_shapes(const std::filesystem::path& stem);

/// Accepts `x`, `x.index` or `x.eptn` and returns the stem `x`.
std::filesystem::path checkpoint_stem(const std::filesystem::path& path);

}  // namespace epan
