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

namespace epan {

/// Worker count after applying the EPAN_THREADS environment override.
/// Throws ConfigError when the variable is set to anything but a positive
/// integer.
std::size_t resolve_workers(std::size_t configured);

/// Calls fn(i) for i in [0, n) on up to `workers` threads with a static
/// contiguous partition. Each index is visited exactly once. If any call
/// throws, the exception from the lowest failing index is rethrown after all
/// workers have joined.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace epan
