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
#include <span>
#include <vector>

#include "epan/tensor.hpp"

// Differentiable affine warping. A theta row (t1..t6) is the 2x3 matrix
// [[t1,t2,t3],[t4,t5,t6]] mapping normalized target coordinates (x_t, y_t, 1)
// to normalized source coordinates (x_s, y_s). Normalized coordinates follow
// the align-corners convention: pixel index i of an axis of length n sits at
// -1 + 2i/(n-1), and at 0 when n == 1. Reads outside the source contribute 0.

namespace epan {

struct AffineParams {
  std::array<double, 6> theta{1, 0, 0, 0, 1, 0};

  static AffineParams identity() { return {}; }
  /// x_s = sx*x_t + tx, y_s = sy*y_t + ty.
  static AffineParams scale_translate(double sx, double sy, double tx, double ty) {
    return {{sx, 0, tx, 0, sy, ty}};
  }

  bool is_finite() const;
  /// Inverse map; throws NumericError when the linear part is singular.
  AffineParams inverse() const;
  std::array<double, 2> apply(double x, double y) const;

  double operator[](std::size_t i) const { return theta[i]; }
  bool operator==(const AffineParams&) const = default;
};

/// The map x -> a(b(x)). compose(identity, b) == b.
AffineParams compose(const AffineParams& a, const AffineParams& b);

/// Sum of absolute differences of the six parameters.
double l1_distance(const AffineParams& a, const AffineParams& b);

double normalized_coord(std::size_t index, std::size_t length);

/// Packs parameters into a [N,6] tensor (the differentiable form of theta).
template <Real T>
Tensor<T> theta_tensor(std::span<const AffineParams> params);
template <Real T>
std::vector<AffineParams> theta_rows(const Tensor<T>& theta);

/// theta [N,6] -> sampling grid [N,H,W,2] holding (x_s, y_s) per target pixel.
/// Throws NumericError on non-finite theta.
template <Real T>
Tensor<T> make_grid(const Tensor<T>& theta, std::size_t height, std::size_t width);

/// Convenience overload producing an unbatched [H,W,2] grid.
template <Real T>
Tensor<T> make_grid(const AffineParams& theta, std::size_t height, std::size_t width);

/// Bilinear sampling with zero padding. input [N,C,H,W] with grid
/// [N,Ho,Wo,2], or input [C,H,W] with grid [Ho,Wo,2]. Differentiable with
/// respect to both the input and the grid.
template <Real T>
Tensor<T> grid_sample(const Tensor<T>& input, const Tensor<T>& grid);

/// grid_sample(input, make_grid(theta, height, width)).
template <Real T>
Tensor<T> affine_warp(const Tensor<T>& input, const Tensor<T>& theta, std::size_t height,
                      std::size_t width);

/// Warps one [C,H,W] image to [C,height,width] outside of any tape.
template <Real T>
Tensor<T> warp_image(const Tensor<T>& image, const AffineParams& theta, std::size_t height,
                     std::size_t width);

template <Real T>
struct SampleGradients {
  Tensor<T> grad_input;
  AffineParams grad_theta{{0, 0, 0, 0, 0, 0}};
};

/// Gradients of sum(upstream * warp(input, theta)) with respect to the input
/// pixels and theta, computed through the tape.
template <Real T>
SampleGradients<T> sample_backward(const Tensor<T>& input, const AffineParams& theta,
                                   const Tensor<T>& upstream);

}  // namespace epan
