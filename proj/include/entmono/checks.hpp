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

/**
 * Randomized gradient-check suite: analytic VJPs and the alpha derivative
 * against central finite differences, at points whose support margin
 * exceeds 1e-3.
 */

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "entmono/gradients.hpp"
#include "entmono/random.hpp"
#include "entmono/transforms.hpp"

namespace entmono {

struct GradcheckEntry {
  std::string name;
  double tolerance = 0.0;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t rejected = 0;  // draws discarded for a small support margin
  bool pass = true;
};

struct GradcheckSuite {
  std::size_t trials = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<GradcheckEntry> entries;

  bool pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
};

inline constexpr double kMarginFloor = 1e-3;

/// `trials` accepted points per check, logits uniform in [-2, 2]^dim.
inline GradcheckSuite run_gradcheck_suite(std::size_t trials, std::size_t dim, std::uint64_t seed,
                                          double eps = 1e-5) {
  if (trials < 1 || dim < 1) throw std::invalid_argument("gradcheck: trials and dim must be >= 1");
  GradcheckSuite suite{trials, dim, seed, {}};
  Rng rng(seed);
  auto draw = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform(rng, -2.0, 2.0);
    return v;
  };
  const std::size_t max_draws = 1000 * trials;

  struct Case {
    std::string name;
    TransformSpec f;
    double tol;
  };
  const std::vector<Case> cases{{"softmax", TransformSpec::softmax_t(), 1e-5},
                                {"softmax-temperature", TransformSpec::softmax_t(0.5), 1e-5},
                                {"sparsemax", TransformSpec::sparsemax_t(), 1e-5},
                                {"entmax15", TransformSpec::entmax15_t(), 1e-4},
                                {"entmax-1.3", TransformSpec::bisect_t(1.3), 1e-4},
                                {"entmax-1.7", TransformSpec::bisect_t(1.7), 1e-4}};
  for (const auto& c : cases) {
    GradcheckEntry e{c.name, c.tol};
    for (std::size_t draws = 0; e.checked < trials && draws < max_draws; ++draws) {
      const LogitVector z(draw(dim));
      const auto p = c.f(z);
      if (support_margin(p, z) <= kMarginFloor) {
        ++e.rejected;
        continue;
      }
      const auto v = draw(dim);
      const auto g = vjp(BackwardContext::capture(p, c.f.temperature), v);
      const auto fd = jacobian_transpose_product(finite_difference_jacobian(c.f, z, eps), v);
      e.max_rel_err = std::max(e.max_rel_err, relative_error(g, fd));
      ++e.checked;
    }
    e.pass = e.checked == trials && e.max_rel_err <= e.tolerance;
    suite.entries.push_back(e);
  }

  GradcheckEntry a{"entmax-alpha", 1e-4};
  for (std::size_t draws = 0; a.checked < trials && draws < max_draws; ++draws) {
    const LogitVector z(draw(dim));
    const auto p = entmax(z, 1.5);
    if (support_margin(p, z) <= kMarginFloor) {
      ++a.rejected;
      continue;
    }
    const auto g = entmax_alpha_grad(BackwardContext::capture(p, z));
    a.max_rel_err = std::max(a.max_rel_err, relative_error(g, finite_difference_alpha(z, 1.5)));
    ++a.checked;
  }
  a.pass = a.checked == trials && a.max_rel_err <= a.tolerance;
  suite.entries.push_back(a);
  return suite;
}

}  // namespace entmono
