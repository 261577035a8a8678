// ----------------------------------------------------------------------------
// Copyright 2026 The entmono Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "entmono/gradients.hpp"
#include "oracles.hpp"

namespace entmono {
namespace {

double sum_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

TEST(SoftmaxVjp, Examples) {
  auto ctx = BackwardContext::capture(softmax({0, 0}));
  auto g = softmax_vjp(ctx, std::vector<double>{1, 0});
  EXPECT_NEAR(g[0], 0.25, 1e-15);
  EXPECT_NEAR(g[1], -0.25, 1e-15);

  ctx = BackwardContext::capture(softmax({0.3, -1.2, 2.0}));
  g = softmax_vjp(ctx, std::vector<double>{4, 4, 4});
  for (double v : g) EXPECT_NEAR(v, 0.0, 1e-15);

  ctx = BackwardContext::capture(softmax({0, 800}));
  g = softmax_vjp(ctx, std::vector<double>{1.5, -2});
  for (double v : g) EXPECT_NEAR(v, 0.0, 1e-9);

  EXPECT_THROW(softmax_vjp(ctx, std::vector<double>{1}), std::invalid_argument);
}

TEST(SparsemaxVjp, Examples) {
  auto ctx = BackwardContext::capture(sparsemax({1, 0}));
  auto g = sparsemax_vjp(ctx, std::vector<double>{1, 0});
  EXPECT_EQ(g, (std::vector<double>{0.0, 0.0}));

  ctx = BackwardContext::capture(sparsemax({0.6, 0.4}));
  g = sparsemax_vjp(ctx, std::vector<double>{1, 0});
  EXPECT_NEAR(g[0], 0.5, 1e-15);
  EXPECT_NEAR(g[1], -0.5, 1e-15);
  const auto jac = finite_difference_jacobian(TransformSpec::sparsemax_t(), {0.6, 0.4});
  const auto fd = jacobian_transpose_product(jac, std::vector<double>{1, 0});
  EXPECT_NEAR(fd[0], 0.5, 1e-9);
  EXPECT_NEAR(fd[1], -0.5, 1e-9);

  ctx = BackwardContext::capture(sparsemax({0.1, 0.2, 0.15}));
  ASSERT_EQ(ctx.probs.support.size(), 3u);
  g = sparsemax_vjp(ctx, std::vector<double>{1, 1, 1});
  for (double v : g) EXPECT_NEAR(v, 0.0, 1e-15);

  EXPECT_THROW(sparsemax_vjp(ctx, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(EntmaxVjp, Examples) {
  auto ctx = BackwardContext::capture(entmax15_exact({1, 0}));
  auto g = entmax_vjp(ctx, std::vector<double>{1, 0});
  EXPECT_NEAR(g[0], 0.2834, 1e-4);
  EXPECT_NEAR(g[1], -0.2834, 1e-4);
  const auto jac = finite_difference_jacobian(TransformSpec::bisect_t(1.5), {1, 0}, 1e-5);
  const auto fd = jacobian_transpose_product(jac, std::vector<double>{1, 0});
  EXPECT_LE(relative_error(g, fd), 1e-6);

  // alpha = 2 reduces to the sparsemax Jacobian.
  const LogitVector z{0.1, 0.5, 0.3};
  auto c2 = BackwardContext::capture(entmax_bisect(z, 2.0));
  auto cs = BackwardContext::capture(sparsemax(z));
  const std::vector<double> v{0.7, -1.1, 2.5};
  const auto a = entmax_vjp(c2, v);
  const auto b = sparsemax_vjp(cs, v);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-9);

  g = entmax_vjp(ctx, std::vector<double>{-3, -3});
  for (double x : g) EXPECT_NEAR(x, 0.0, 1e-8);

  auto soft = BackwardContext::capture(softmax({1, 0}));
  EXPECT_THROW(entmax_vjp(soft, std::vector<double>{1, 0}), std::invalid_argument);
}

TEST(EntmaxAlphaGrad, Examples) {
  for (double alpha : {1.2, 1.5, 1.8}) {
    const LogitVector z{0.4, 0.4, 0.4};
    const auto g = entmax_alpha_grad(BackwardContext::capture(entmax(z, alpha), z));
    for (double v : g) EXPECT_NEAR(v, 0.0, 1e-12);
  }

  const LogitVector z{1, 0};
  const auto g = entmax_alpha_grad(BackwardContext::capture(entmax(z, 1.5), z));
  const auto fd = finite_difference_alpha(z, 1.5, 1e-4);
  EXPECT_GT(g[0], 0.0);
  EXPECT_NEAR(g[0], -g[1], 1e-12);
  EXPECT_LE(relative_error(g, fd), 1e-4);

  const LogitVector sat{10, 0};
  const auto gs = entmax_alpha_grad(BackwardContext::capture(entmax(sat, 1.5), sat));
  EXPECT_EQ(gs, (std::vector<double>{0.0, 0.0}));

  EXPECT_THROW(entmax_alpha_grad(BackwardContext::capture(entmax(z, 1.5))), std::logic_error);
}

TEST(FiniteDifference, Examples) {
  auto jac = finite_difference_jacobian(TransformSpec::softmax_t(), {0, 0});
  EXPECT_NEAR(jac(0, 0), 0.25, 1e-9);
  EXPECT_NEAR(jac(0, 1), -0.25, 1e-9);
  EXPECT_NEAR(jac(1, 0), -0.25, 1e-9);
  EXPECT_NEAR(jac(1, 1), 0.25, 1e-9);

  // [1, 0] sits exactly on the saturation boundary (gap = 1), so the
  // difference quotient straddles a kink; [2, 0] is strictly inside.
  EXPECT_EQ(support_margin(sparsemax({1, 0}), {1, 0}), 0.0);
  jac = finite_difference_jacobian(TransformSpec::sparsemax_t(), {2, 0});
  EXPECT_LE(jac.cwiseAbs().maxCoeff(), 1e-12);

  const LogitVector z{1, 0};
  jac = finite_difference_jacobian(TransformSpec::entmax15_t(), z);
  const auto ctx = BackwardContext::capture(entmax15_exact(z));
  for (int j = 0; j < 2; ++j) {
    std::vector<double> e(2, 0.0);
    e[j] = 1.0;
    const auto col = entmax_vjp(ctx, e);
    std::vector<double> fd{jac(0, j), jac(1, j)};
    EXPECT_LE(relative_error(col, fd), 1e-4);
  }
}

struct Case {
  TransformSpec f;
  double tol;
};

TEST(Properties, VjpsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  const std::vector<Case> cases{{TransformSpec::softmax_t(), 1e-5},
                                {TransformSpec::softmax_t(0.5), 1e-5},
                                {TransformSpec::sparsemax_t(), 1e-5},
                                {TransformSpec::entmax15_t(), 1e-4},
                                {TransformSpec::bisect_t(1.3), 1e-4},
                                {TransformSpec::bisect_t(1.7), 1e-4}};
  for (const auto& c : cases) {
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
      const LogitVector z(oracle::uniform_vector(rng, 2 + trial % 10, -2.0, 2.0));
      const auto p = c.f(z);
      if (support_margin(p, z) <= 1e-3) continue;
      ++checked;
      const auto v = oracle::uniform_vector(rng, z.size(), -1.0, 1.0);
      auto ctx = BackwardContext::capture(p, c.f.temperature);
      const auto g = vjp(ctx, v);
      const auto fd = jacobian_transpose_product(finite_difference_jacobian(c.f, z), v);
      EXPECT_LE(relative_error(g, fd), c.tol) << c.f.name();
      EXPECT_NEAR(sum_of(g), 0.0, 1e-8);
    }
    EXPECT_GT(checked, 100) << c.f.name();
  }
}

TEST(Properties, VjpIsLinear) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const LogitVector z(oracle::uniform_vector(rng, 2 + trial % 8, -2.0, 2.0));
    const auto v1 = oracle::uniform_vector(rng, z.size(), -1.0, 1.0);
    const auto v2 = oracle::uniform_vector(rng, z.size(), -1.0, 1.0);
    const double c = 1.7;
    std::vector<double> mix(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) mix[i] = v1[i] + c * v2[i];
    for (double alpha : {1.0, 1.5, 1.35, 2.0}) {
      const auto ctx = BackwardContext::capture(entmax(z, alpha));
      const auto a = vjp(ctx, mix);
      const auto b1 = vjp(ctx, v1);
      const auto b2 = vjp(ctx, v2);
      for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(a[i], b1[i] + c * b2[i], 1e-10);
    }
  }
}

TEST(Properties, AlphaGradMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const LogitVector z(oracle::uniform_vector(rng, 1 + trial % 16, -2.0, 2.0));
    const auto p = entmax(z, 1.5);
    if (support_margin(p, z) <= 1e-3) continue;
    ++checked;
    const auto g = entmax_alpha_grad(BackwardContext::capture(p, z));
    const auto fd = finite_difference_alpha(z, 1.5);
    EXPECT_LE(relative_error(g, fd), 1e-4);
    EXPECT_NEAR(sum_of(g), 0.0, 1e-6);
  }
  EXPECT_GT(checked, 300);
}

}  // namespace
}  // namespace entmono
