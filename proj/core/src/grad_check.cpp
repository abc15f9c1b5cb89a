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

#include "epan/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "epan/errors.hpp"

namespace epan {

namespace {

double evaluate(const std::function<Tensord()>& loss_fn, std::size_t index) {
  const double v = loss_fn().item();
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: non-finite loss while perturbing element " +
                       std::to_string(index));
  }
  return v;
}

}  // namespace

GradCheckReport grad_check_param(const std::function<Tensord()>& loss_fn, Tensord param,
                                 double eps, std::size_t max_probes) {
  if (!(eps > 0.0)) throw UsageError("grad_check: eps must be positive");
  const bool had_flag = param.requires_grad();
  param.set_requires_grad(true);
  param.zero_grad();
  {
    GradientTape<double> tape;
    Tensord loss = loss_fn();
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
    tape.backward(loss);
  }
  // A parameter the loss does not reach has an all-zero gradient.
  std::vector<double> analytic(param.size(), 0.0);
  if (param.has_grad()) std::copy(param.grad().begin(), param.grad().end(), analytic.begin());
  param.zero_grad();
  param.set_requires_grad(had_flag);

  const std::size_t n = param.size();
  const std::size_t probes = (max_probes == 0 || max_probes >= n) ? n : max_probes;
  GradCheckReport report;
  report.probes = probes;
  auto values = param.mutable_data();
  for (std::size_t k = 0; k < probes; ++k) {
    const std::size_t i = probes == n ? k : (k * n) / probes;
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = evaluate(loss_fn, i);
    values[i] = saved - eps;
    const double down = evaluate(loss_fn, i);
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (k == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.analytic = analytic[i];
      report.numeric = numeric;
    }
  }
  return report;
}

double grad_check(const std::function<Tensord(const Tensord&)>& f, const Tensord& x, double eps) {
  Tensord leaf = x.detach();
  return grad_check_param([&]() { return f(leaf); }, leaf, eps).max_rel_error;
}

}  // namespace epan
