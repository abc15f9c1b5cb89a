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

#include <stdexcept>
#include <string>

namespace epan {

/// Base of every error raised by the library. `exit_code()` is the process
/// status the command line tool reports for this class of failure.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const { return 1; }
};

/// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

/// Non-finite values, failed finite-difference checks, aborted optimizer steps.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

/// API misuse such as calling backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A triplet batch in which some anchor has no negative.
class MiningError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

/// Invalid run configuration, schema violations, unusable datasets.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

/// Malformed files (image headers, tensor dumps, checkpoints, CSV sidecars).
class FormatError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

/// Retrieval evaluation without a single scorable query.
class EvaluationError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

}  // namespace epan
