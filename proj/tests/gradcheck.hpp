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

// Central finite-difference oracle used by the gradient suites. It only
// evaluates forward passes; the analytic side comes from tisr::backward.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tisr/autograd.hpp"
#include "tisr/ops.hpp"

namespace tisr::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

/// Builds loss = sum(f(inputs) * probe) and compares d loss / d input against
/// central differences for every element of every input (or at most
/// `max_per_input` evenly spread elements when nonzero).
inline GradCheckResult grad_check(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
    std::vector<Tensor<double>> inputs, std::uint64_t probe_seed = 99, double h = 1e-4,
    std::size_t max_per_input = 0) {
  for (auto& in : inputs) in.set_requires_grad(true);
  Tensor<double> probe;
  {
    NoGradGuard ng;
    auto out = f(inputs);
    Prng rng(probe_seed);
    probe = Tensor<double>::uniform(out.shape(), rng, -1.0, 1.0);
  }
  auto loss_of = [&](const std::vector<Tensor<double>>& xs) {
    return sum(mul(f(xs), probe));
  };
  for (auto& in : inputs) in.zero_grad();
  backward(loss_of(inputs));

  GradCheckResult r;
  for (auto& in : inputs) {
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    const std::size_t n = in.numel();
    const std::size_t stride = (max_per_input && n > max_per_input) ? n / max_per_input : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      NoGradGuard ng;
      auto data = in.mutable_data();
      const double saved = data[i];
      const double step = h * std::max(1.0, std::abs(saved));
      data[i] = saved + step;
      const double up = loss_of(inputs).item();
      data[i] = saved - step;
      const double down = loss_of(inputs).item();
      data[i] = saved;
      const double numeric = (up - down) / (2 * step);
      r.max_rel_error = std::max(r.max_rel_error, rel_error(analytic[i], numeric));
      r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic[i] - numeric));
      ++r.checked;
    }
  }
  return r;
}

/// Same comparison for a scalar loss over already-built leaf parameters.
/// Checks `count` randomly drawn (tensor, element) pairs.
inline GradCheckResult grad_check_params(const std::function<Tensor<double>()>& loss_fn,
                                         const std::vector<Tensor<double>>& params, std::size_t count,
                                         std::uint64_t seed = 7, double h = 1e-6) {
  for (auto p : params) p.zero_grad();
  backward(loss_fn());
  std::vector<std::size_t> offsets{0};
  for (const auto& p : params) offsets.push_back(offsets.back() + p.numel());
  Prng rng(seed);
  GradCheckResult r;
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t flat = rng.below(offsets.back());
    const std::size_t t = static_cast<std::size_t>(
        std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    const std::size_t i = flat - offsets[t];
    Tensor<double> p = params[t];
    const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
    NoGradGuard ng;
    auto data = p.mutable_data();
    const double saved = data[i];
    const double step = h * std::max(1.0, std::abs(saved));
    data[i] = saved + step;
    const double up = loss_fn().item();
    data[i] = saved - step;
    const double down = loss_fn().item();
    data[i] = saved;
    const double numeric = (up - down) / (2 * step);
    r.max_rel_error = std::max(r.max_rel_error, rel_error(analytic, numeric));
    r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic - numeric));
    ++r.checked;
  }
  return r;
}

/// Uniform values in [lo, hi] with magnitude at least `gap`, away from the
/// kinks of relu/abs.
inline Tensor<double> rand_away_from_zero(Shape shape, Prng& rng, double gap = 0.05,
                                          double hi = 1.0) {
  std::vector<double> d(numel(shape));
  for (auto& x : d) {
    const double mag = rng.uniform(gap, hi);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor<double>(std::move(shape), std::move(d));
}

}  // namespace tisr::testing
