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

#include "epan/tensor.hpp"

#include <sstream>

#include "epan/errors.hpp"

namespace epan {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("zero-length axis in shape " + to_string(shape));
  }
}

}  // namespace

template <Real T>
Tensor<T>::Tensor(Shape shape, T fill) {
  check_shape(shape);
  storage_ = std::make_shared<detail::TensorStorage<T>>();
  storage_->data.assign(element_count(shape), fill);
  storage_->shape = std::move(shape);
}

template <Real T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
  check_shape(shape);
  if (element_count(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  storage_ = std::make_shared<detail::TensorStorage<T>>();
  storage_->data = std::move(values);
  storage_->shape = std::move(shape);
}

template <Real T>
Tensor<T>::Tensor(Shape shape, std::initializer_list<T> values)
    : Tensor(std::move(shape), std::vector<T>(values)) {}

template <Real T>
Tensor<T> Tensor<T>::wrap(detail::StoragePtr<T> storage) {
  Tensor t;
  t.storage_ = std::move(storage);
  return t;
}

template <Real T>
const Shape& Tensor<T>::shape() const {
  if (!storage_) throw UsageError("access to an undefined tensor");
  return storage_->shape;
}

template <Real T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(s));
  }
  return s[axis];
}

template <Real T>
std::size_t Tensor<T>::size() const {
  return storage_ ? storage_->data.size() : 0;
}

template <Real T>
std::span<const T> Tensor<T>::data() const {
  if (!storage_) throw UsageError("access to an undefined tensor");
  return storage_->data;
}

template <Real T>
std::span<T> Tensor<T>::mutable_data() {
  if (!storage_) throw UsageError("access to an undefined tensor");
  return storage_->data;
}

template <Real T>
T Tensor<T>::item() const {
  if (size() != 1) {
    throw UsageError("item() on a tensor of shape " + to_string(shape()));
  }
  return storage_->data[0];
}

template <Real T>
bool Tensor<T>::requires_grad() const {
  return storage_ && storage_->requires_grad;
}

template <Real T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!storage_) throw UsageError("access to an undefined tensor");
  storage_->requires_grad = on;
  return *this;
}

template <Real T>
bool Tensor<T>::has_grad() const {
  return storage_ && !storage_->grad.empty();
}

template <Real T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw UsageError("tensor has no gradient");
  return storage_->grad;
}

template <Real T>
std::span<T> Tensor<T>::mutable_grad() {
  if (!storage_) throw UsageError("access to an undefined tensor");
  return detail::grad_of(*storage_);
}

template <Real T>
void Tensor<T>::zero_grad() {
  if (storage_) storage_->grad.assign(storage_->data.size(), T(0));
}

template <Real T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), storage_->data);
}

template <Real T>
Tensor<T> Tensor<T>::reshaped(Shape new_shape) const {
  return Tensor(std::move(new_shape), storage_->data);
}

// ---------------------------------------------------------------------------

namespace {

template <Real T>
GradientTape<T>*& active_slot() {
  thread_local GradientTape<T>* current = nullptr;
  return current;
}

}  // namespace

template <Real T>
GradientTape<T>::GradientTape() : previous_(active_slot<T>()) {
  active_slot<T>() = this;
}

template <Real T>
GradientTape<T>::~GradientTape() {
  active_slot<T>() = previous_;
}

template <Real T>
GradientTape<T>* GradientTape<T>::active() {
  return active_slot<T>();
}

template <Real T>
void GradientTape<T>::record(std::string_view op, std::vector<detail::StoragePtr<T>> inputs,
                             detail::StoragePtr<T> output, BackwardFn backward) {
  output->requires_grad = true;
  entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(backward)});
}

template <Real T>
void GradientTape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  auto& seed = detail::grad_of(*loss.storage());
  seed[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->backward();
  }
  entries_.clear();
}

template <Real T>
std::vector<std::string_view> GradientTape<T>::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.op);
  return names;
}

template class Tensor<float>;
template class Tensor<double>;
template class GradientTape<float>;
template class GradientTape<double>;

}  // namespace epan
