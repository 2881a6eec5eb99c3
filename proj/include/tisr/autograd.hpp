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

#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tisr/tensor.hpp"

namespace tisr {

/// Operations reachable from a root, in an order where every node comes
/// after all of its parents. Replaying adjoints walks it back to front.
template <class T>
class GradTape {
 public:
  static GradTape record(const Tensor<T>& root) {
    GradTape tape;
    if (!root.requires_grad()) return tape;
    std::unordered_set<Node<T>*> seen;
    // Iterative post-order DFS: (node, next parent index).
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node<T>* parent = node->parents[next++].get();
        if (parent && parent->requires_grad && seen.insert(parent).second) {
          stack.emplace_back(parent, 0);
        }
      } else {
        tape.order_.push_back(node);
        stack.pop_back();
      }
    }
    return tape;
  }

  const std::vector<Node<T>*>& entries() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<Node<T>*> order_;
};

/// Gradient per requires-grad leaf reached by a backward pass.
template <class T>
class Gradients {
 public:
  bool contains(const Tensor<T>& leaf) const { return grads_.count(leaf.node()) != 0; }
  const std::vector<T>& of(const Tensor<T>& leaf) const {
    auto it = grads_.find(leaf.node());
    if (it == grads_.end()) throw ContractError("tensor has no gradient in this map");
    return it->second;
  }
  std::size_t size() const { return grads_.size(); }

  void insert(const Node<T>* node, std::vector<T> g) { grads_[node] = std::move(g); }

 private:
  std::unordered_map<const Node<T>*, std::vector<T>> grads_;
};

/// Reverse-mode pass from a scalar loss.
///
/// Leaf gradients accumulate into the leaves (read them with Tensor::grad)
/// and are also returned. Interior nodes reached by the pass are consumed:
/// their edges and closures are dropped, so backward runs once per graph.
template <class T>
Gradients<T> backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  Gradients<T> out;
  if (!loss.requires_grad()) return out;

  auto tape = GradTape<T>::record(loss);
  loss.node()->grad_buffer()[0] += T(1);
  const auto& order = tape.entries();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->is_leaf()) node->backward_fn(*node);
  }
  for (Node<T>* node : order) {
    if (node->is_leaf()) {
      out.insert(node, node->grad_buffer());
    } else {
      node->grad.clear();
      node->grad.shrink_to_fit();
      node->parents.clear();
      node->backward_fn = nullptr;
      node->requires_grad = false;
    }
  }
  return out;
}

}  // namespace tisr
