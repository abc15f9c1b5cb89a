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
#include <functional>

#include "epan/tensor.hpp"

namespace epan {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;   // at worst_index
  std::size_t probes = 0;
};

/// Compares the taped gradient of `loss_fn` with respect to `param` against
/// central differences, perturbing `param` in place and restoring it. The
/// error of one element is |analytic - numeric| / max(1, |analytic|).
///
/// With `max_probes` > 0 only that many evenly spaced elements are probed.
/// Throws NumericError naming the element index when the loss is not finite.
GradCheckReport grad_check_param(const std::function<Tensord()>& loss_fn, Tensord param,
                                 double eps = 1e-5, std::size_t max_probes = 0);

/// grad_check for a function of a single input tensor. Returns the maximum
/// relative error over all elements of `x`.
double grad_check(const std::function<Tensord(const Tensord&)>& f, const Tensord& x,
                  double eps = 1e-5);

}  // namespace epan
