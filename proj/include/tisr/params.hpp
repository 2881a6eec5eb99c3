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

#include <cmath>
#include <string>
#include <vector>

#include "tisr/ops.hpp"

namespace tisr {

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered, named view over a model's parameter tensors. Entries share
/// storage with the model, so updates through the set are visible there.
template <class T>
class ParamSet {
 public:
  void add(std::string name, const Tensor<T>& t) {
    if (t.defined()) items_.push_back({std::move(name), t});
  }

  void append(const ParamSet& other) {
    items_.insert(items_.end(), other.items_.begin(), other.items_.end());
  }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(items_.size());
    for (const auto& it : items_) out.push_back(it.tensor);
    return out;
  }

  const NamedParam<T>* find(const std::string& name) const {
    for (const auto& it : items_)
      if (it.name == name) return &it;
    return nullptr;
  }

  void set_requires_grad(bool flag) {
    for (auto& it : items_) it.tensor.set_requires_grad(flag);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& it : items_) n += it.tensor.numel();
    return n;
  }

  std::size_t size() const { return items_.size(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }

 private:
  std::vector<NamedParam<T>> items_;
};

/// Restores requires_grad flags of a parameter set on scope exit.
template <class T>
class FreezeScope {
 public:
  explicit FreezeScope(ParamSet<T> params) : params_(std::move(params)) {
    for (const auto& p : params_) saved_.push_back(p.tensor.requires_grad());
    params_.set_requires_grad(false);
  }
  ~FreezeScope() {
    std::size_t i = 0;
    for (auto& p : params_) p.tensor.set_requires_grad(saved_[i++]);
  }
  FreezeScope(const FreezeScope&) = delete;
  FreezeScope& operator=(const FreezeScope&) = delete;

 private:
  ParamSet<T> params_;
  std::vector<bool> saved_;
};

template <class T>
struct Linear {
  Tensor<T> w;  // [in x out]
  Tensor<T> b;  // [out]

  /// Gaussian weights with std gain/sqrt(in), zero bias.
  static Linear init(std::size_t in, std::size_t out, Prng& rng, double gain = 1.0) {
    return {Tensor<T>::randn({in, out}, rng, gain / std::sqrt(static_cast<double>(in)), true),
            Tensor<T>::zeros({out}, true)};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, w, b); }

  void collect(ParamSet<T>& out, const std::string& prefix) const {
    out.add(prefix + ".w", w);
    out.add(prefix + ".b", b);
  }
};

template <class T>
struct Conv {
  Tensor<T> w;  // [out, in, k, k]
  Tensor<T> b;  // [out], may be undefined
  std::size_t stride = 1;
  std::size_t pad = 0;

  /// He-normal weights scaled by `gain`.
  static Conv init(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                   std::size_t pad, Prng& rng, bool with_bias = true, double gain = 1.0) {
    const double std = gain * std::sqrt(2.0 / static_cast<double>(in * k * k));
    Conv c;
    c.w = Tensor<T>::randn({out, in, k, k}, rng, std, true);
    if (with_bias) c.b = Tensor<T>::zeros({out}, true);
    c.stride = stride;
    c.pad = pad;
    return c;
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }

  void collect(ParamSet<T>& out, const std::string& prefix) const {
    out.add(prefix + ".w", w);
    out.add(prefix + ".b", b);
  }
};

template <class T>
struct LayerNormParams {
  Tensor<T> gain;
  Tensor<T> bias;

  static LayerNormParams init(std::size_t d) {
    return {Tensor<T>::ones({d}, true), Tensor<T>::zeros({d}, true)};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, -1, gain, bias); }

  void collect(ParamSet<T>& out, const std::string& prefix) const {
    out.add(prefix + ".gain", gain);
    out.add(prefix + ".bias", bias);
  }
};

}  // namespace tisr
