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

// Analytic vs central-difference gradients in 64-bit mode, one test per case.
#include <gtest/gtest.h>

#include "grad_suite.hpp"

namespace tisr {
namespace {

using testing::GradCase;

class GradCheck : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradCheck, MatchesCentralDifferences) {
  const auto& c = GetParam();
  const auto r = c.run();
  EXPECT_GT(r.checked, 0u);
  EXPECT_LE(r.max_rel_error, c.tolerance) << c.name << ": abs " << r.max_abs_error;
}

std::string case_name(const ::testing::TestParamInfo<GradCase>& info) { return info.param.name; }

INSTANTIATE_TEST_SUITE_P(Ops, GradCheck, ::testing::ValuesIn(testing::op_grad_cases()), case_name);
INSTANTIATE_TEST_SUITE_P(Composed, GradCheck, ::testing::ValuesIn(testing::composed_grad_cases()), case_name);

TEST(GradCheckOracle, DetectsAWrongBackward) {
  // A deliberately wrong derivative must be caught by the oracle.
  Prng rng(1);
  auto r = testing::grad_check(
      [](const std::vector<Tensor<double>>& x) {
        return detail::unary<double>(
            x[0], [](double v) { return v * v; }, [](double v, double) { return v; });
      },
      {Tensor<double>::randn({4}, rng)});
  EXPECT_GT(r.max_rel_error, 0.1);
}

}  // namespace
}  // namespace tisr
