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
#include <vector>

// Finite-difference verification of every differentiable operation, shared by
// the CLI's gradcheck command and the test suites.

namespace epan {

inline constexpr double kPrimitiveGradTolerance = 1e-4;
inline constexpr double kModelGradTolerance = 1e-3;

struct GradCase {
  std::string name;
  double max_rel_error = 0.0;  // worst over all seeds and checked tensors
  double tolerance = 0.0;
  std::uint64_t worst_seed = 0;

  bool passed() const { return max_rel_error < tolerance; }
};

struct GradSuiteOptions {
  std::uint64_t first_seed = 0;
  std::size_t seeds = 20;
  bool include_model = true;
  /// Elements probed per model tensor; primitives probe every element.
  std::size_t model_probes = 3;
};

struct GradSuiteReport {
  std::vector<GradCase> cases;
  double seconds = 0.0;

  bool passed() const;
};

GradSuiteReport run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace epan
