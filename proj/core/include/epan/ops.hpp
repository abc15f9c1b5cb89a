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
#include <vector>

#include "epan/tensor.hpp"

// Differentiable primitives. Spatial operations use NCHW layout; conv2d also
// accepts an unbatched [C,H,W] input and then returns [C',H',W']. Every op
// records itself on the active GradientTape when one of its inputs requires a
// gradient.

namespace epan {

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kNormMomentum = 0.1;

/// Running statistics of a batch-norm layer. Updated only in training mode;
/// the running variance uses the unbiased batch estimate.
template <Real T>
struct NormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;

  NormStats() = default;
  explicit NormStats(std::size_t channels)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

/// Direct cross-correlation (no kernel flip), zero padding on all sides.
/// Output spatial size is floor((H + 2*pad - kH) / stride) + 1.
template <Real T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t pad);

/// Derivative at exactly 0 is 0.
template <Real T>
Tensor<T> relu(const Tensor<T>& x);

/// y = x W^T + b for x [N,D], W [O,D], b [O]. `bias` may be undefined.
template <Real T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Non-overlapping k x k windows; trailing rows/columns that do not fill a
/// window are dropped.
template <Real T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t k);
template <Real T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t k);

/// [N,C,H,W] -> [N,C].
template <Real T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Normalizes each channel of [N,C,H,W] or [N,C] input. Training mode uses
/// batch statistics and updates `stats`; evaluation mode uses `stats`.
template <Real T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     NormStats<T>& stats, bool training);

/// Normalizes each (sample, channel) plane of [N,C,H,W] input.
template <Real T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta);

/// Softmax over the last axis.
template <Real T>
Tensor<T> softmax(const Tensor<T>& logits);

template <Real T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <Real T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <Real T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// Sum / mean of all elements, as a scalar of shape [].
template <Real T>
Tensor<T> sum(const Tensor<T>& x);
template <Real T>
Tensor<T> mean(const Tensor<T>& x);

template <Real T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

template <Real T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Row-wise L2 normalization of [N,D] (or a single vector [D]). A zero row
/// maps to a zero row with zero gradient; the number of such rows is written
/// to `zero_rows` when given.
template <Real T>
Tensor<T> l2_normalize(const Tensor<T>& x, std::size_t* zero_rows = nullptr);

}  // namespace epan
