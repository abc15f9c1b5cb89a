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

#include <concepts>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace epan {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is written
  bool requires_grad = false;
};

template <typename T>
using StoragePtr = std::shared_ptr<TensorStorage<T>>;

}  // namespace detail

/// Dense row-major array with an optional gradient slot.
///
/// Copies are shallow: two Tensor values produced by copying refer to the
/// same storage, so a gradient written through one is visible through the
/// other. Operations never write to their inputs' values; only the optimizer
/// updates leaf parameters in place, between tapes.
template <Real T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);
  Tensor(Shape shape, std::initializer_list<T> values);

  bool defined() const { return static_cast<bool>(storage_); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const T> data() const;
  /// Mutable view of the values. Intended for leaves (parameters, inputs);
  /// mutating a tensor an op has already consumed invalidates that op's
  /// recorded backward.
  std::span<T> mutable_data();
  T operator[](std::size_t i) const { return data()[i]; }
  T item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const;
  std::span<const T> grad() const;
  /// Gradient buffer, allocated as zeros on first access.
  std::span<T> mutable_grad();
  void zero_grad();

  /// Deep copy of the values without gradient or tape history.
  Tensor detach() const;
  Tensor reshaped(Shape shape) const;  // deep copy with a new shape

  template <Real U>
  Tensor<U> cast() const {
    std::vector<U> out(data().begin(), data().end());
    return Tensor<U>(shape(), std::move(out));
  }

  const detail::StoragePtr<T>& storage() const { return storage_; }
  static Tensor wrap(detail::StoragePtr<T> storage);

 private:
  detail::StoragePtr<T> storage_;
};

template <Real T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

using Tensord = Tensor<double>;
using Tensorf = Tensor<float>;

/// Records differentiable operations executed on the current thread while it
/// is alive, in execution order, so gradients can be replayed in reverse.
///
/// Tapes nest: constructing a tape makes it the active one for the thread and
/// destroying it restores the previous tape. Operations on tensors that do not
/// require gradients, or executed with no active tape, are not recorded.
template <Real T>
class GradientTape {
 public:
  using BackwardFn = std::function<void()>;

  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  static GradientTape* active();

  void record(std::string_view op, std::vector<detail::StoragePtr<T>> inputs,
              detail::StoragePtr<T> output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating
  /// into the grad slot of every recorded tensor that requires a gradient.
  /// The tape is emptied afterwards. Throws UsageError if `loss` is not a
  /// scalar.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  std::vector<std::string_view> op_names() const;

 private:
  struct Entry {
    std::string_view op;
    std::vector<detail::StoragePtr<T>> inputs;
    detail::StoragePtr<T> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  GradientTape* previous_ = nullptr;
};

namespace detail {

/// True when an op over these inputs must be recorded.
template <Real T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (GradientTape<T>::active() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

/// Gradient buffer of a storage, allocated as zeros on first use.
template <typename T>
std::vector<T>& grad_of(TensorStorage<T>& s) {
  if (s.grad.empty()) s.grad.assign(s.data.size(), T(0));
  return s.grad;
}

}  // namespace detail

}  // namespace epan
