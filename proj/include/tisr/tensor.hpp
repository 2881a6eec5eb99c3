/* Copyright 2026 The tisr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tisr/error.hpp"
#include "tisr/prng.hpp"

namespace tisr {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {
inline thread_local bool grad_mode = true;
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode; }

/// Disables graph recording for its lifetime. Ops evaluated inside produce
/// plain values even when their inputs require gradients.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Storage plus graph edge for one tensor value.
///
/// A node with a backward function is an interior node of the graph; one
/// without is a leaf. Leaves that require grad accumulate into `grad` until
/// zero_grad(); interior grads are released once backward has consumed them.
template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  std::vector<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (tisr::numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + to_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const auto n = tisr::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }
  static Tensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(1), requires_grad);
  }
  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
  }
  static Tensor eye(std::size_t n) {
    std::vector<T> d(n * n, T(0));
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] = T(1);
    return Tensor(Shape{n, n}, std::move(d));
  }
  /// Gaussian fill with the given standard deviation.
  static Tensor randn(Shape shape, Prng& rng, double stddev = 1.0, bool requires_grad = false) {
    std::vector<T> d(tisr::numel(shape));
    for (auto& x : d) x = static_cast<T>(rng.normal() * stddev);
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }
  static Tensor uniform(Shape shape, Prng& rng, double lo, double hi, bool requires_grad = false) {
    std::vector<T> d(tisr::numel(shape));
    for (auto& x : d) x = static_cast<T>(rng.uniform(lo, hi));
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }

  /// Writable view of a leaf's storage (parameter init and optimizer updates).
  std::span<T> mutable_data() {
    if (!node_->is_leaf()) throw ContractError("mutable_data on a non-leaf tensor");
    return node_->data;
  }

  T item() const {
    if (numel() != 1) {
      throw ContractError("item() on tensor of shape " + to_string(shape()));
    }
    return node_->data[0];
  }
  T operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) {
    if (!node_->is_leaf()) throw ContractError("set_requires_grad on a non-leaf tensor");
    node_->requires_grad = flag;
  }

  bool has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, cut from the graph.
  Tensor detach() const { return Tensor(node_->shape, node_->data, false); }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> d(node_->data.begin(), node_->data.end());
    return Tensor<U>(node_->shape, std::move(d), false);
  }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

/// Wraps an op result. The backward closure and parent edges are kept only
/// when recording is enabled and some input requires grad.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  const bool needs = grad_enabled() && std::any_of(inputs.begin(), inputs.end(),
                                                   [](const Tensor<T>& t) {
                                                     return t.defined() && t.requires_grad();
                                                   });
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward_fn = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

/// Parent i if it exists and wants a gradient, else nullptr.
template <class T>
Node<T>* grad_target(Node<T>& self, std::size_t i) {
  Node<T>* p = self.parents[i].get();
  return (p && p->requires_grad) ? p : nullptr;
}

}  // namespace detail
}  // namespace tisr
