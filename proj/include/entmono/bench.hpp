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

/// Forward-pass micro-benchmark for the simplex transforms.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "entmono/random.hpp"
#include "entmono/transforms.hpp"

namespace entmono {

struct BenchResult {
  std::string kind;
  std::size_t dim = 0;
  std::size_t batch = 0;
  std::size_t iters = 0;
  double ns_per_row_mean = 0.0;
  double ns_per_row_std = 0.0;
  double checksum = 0.0;
};

/// "softmax", "sparsemax", "entmax15" or "entmax" (bisection at alpha 1.5).
inline TransformSpec bench_transform(const std::string& kind) {
  if (kind == "softmax") return TransformSpec::softmax_t();
  if (kind == "sparsemax") return TransformSpec::sparsemax_t();
  if (kind == "entmax15") return TransformSpec::entmax15_t();
  if (kind == "entmax") return TransformSpec::bisect_t(1.5);
  throw std::invalid_argument("unknown transform kind: " + kind);
}

/// Rows are N(0, 1) logits. One untimed warm-up pass, then `iters` timed
/// passes over the whole batch; mean and population std of ns per row.
inline BenchResult run_bench(const std::string& kind, std::size_t dim, std::size_t batch, std::size_t iters,
                             std::uint64_t seed = 1) {
  if (dim < 1 || batch < 1 || iters < 1) throw std::invalid_argument("bench: sizes must be positive");
  const auto f = bench_transform(kind);
  Rng rng(seed);
  std::vector<LogitVector> rows;
  rows.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> z(dim);
    for (auto& x : z) x = normal(rng);
    rows.emplace_back(std::move(z));
  }
  BenchResult r{kind, dim, batch, iters};
  auto pass = [&] {
    double acc = 0.0;
    for (const auto& z : rows) acc += f(z).probs.front();
    return acc;
  };
  r.checksum += pass();
  std::vector<double> samples;
  for (std::size_t it = 0; it < iters; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    r.checksum += pass();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count() / static_cast<double>(batch));
  }
  for (double s : samples) r.ns_per_row_mean += s;
  r.ns_per_row_mean /= static_cast<double>(samples.size());
  for (double s : samples) r.ns_per_row_std += (s - r.ns_per_row_mean) * (s - r.ns_per_row_mean);
  r.ns_per_row_std = std::sqrt(r.ns_per_row_std / static_cast<double>(samples.size()));
  return r;
}

}  // namespace entmono
