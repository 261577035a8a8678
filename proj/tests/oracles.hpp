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

// Brute-force reference implementations used only by the test suites. None of
// these share code paths with the library routines they check.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace entmono::oracle {

struct SupportSolution {
  std::vector<double> probs;
  std::vector<std::size_t> support;
  double tau = 0.0;
};

// Enumerate every non-empty candidate support, solve the threshold each one
// implies, and keep the subset that is self-consistent: entries inside lie
// strictly above tau, entries outside at or below it.
template <typename SolveTau, typename Prob>
std::optional<SupportSolution> exhaustive_support(const std::vector<double>& x, SolveTau solve,
                                                  Prob prob) {
  const std::size_t n = x.size();
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    std::vector<double> in;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask & (1u << j)) in.push_back(x[j]);
    }
    const auto tau = solve(in);
    if (!tau) continue;
    bool ok = true;
    for (std::size_t j = 0; j < n && ok; ++j) {
      const bool inside = mask & (1u << j);
      ok = inside ? x[j] > *tau : x[j] <= *tau;
    }
    if (!ok) continue;
    SupportSolution s;
    s.tau = *tau;
    s.probs.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (mask & (1u << j)) {
        s.probs[j] = prob(x[j] - *tau);
        s.support.push_back(j);
      }
    }
    return s;
  }
  return std::nullopt;
}

inline std::optional<SupportSolution> sparsemax_exhaustive(const std::vector<double>& z) {
  return exhaustive_support(
      z,
      [](const std::vector<double>& in) -> std::optional<double> {
        double s = 0.0;
        for (double v : in) s += v;
        return (s - 1.0) / static_cast<double>(in.size());
      },
      [](double u) { return u; });
}

// 1.5-entmax on the halved logits: sum_S (x - tau)^2 = 1 with tau below every x in S.
inline std::optional<SupportSolution> entmax15_exhaustive(const std::vector<double>& z) {
  std::vector<double> x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[i] / 2.0;
  return exhaustive_support(
      x,
      [](const std::vector<double>& in) -> std::optional<double> {
        const double k = static_cast<double>(in.size());
        double s1 = 0.0, s2 = 0.0;
        for (double v : in) {
          s1 += v;
          s2 += v * v;
        }
        const double disc = s1 * s1 - k * (s2 - 1.0);
        if (disc < 0.0) return std::nullopt;
        return (s1 - std::sqrt(disc)) / k;
      },
      [](double u) { return u * u; });
}

// Plain bisection on tau for alpha-entmax with a fixed iteration count and no
// max-shift, in long double.
inline std::vector<double> entmax_bisection(const std::vector<double>& z, double alpha,
                                            int iters = 100) {
  const long double a1 = alpha - 1.0L;
  long double lo = std::numeric_limits<long double>::infinity();
  long double hi = -lo;
  for (double v : z) {
    lo = std::min(lo, a1 * v);
    hi = std::max(hi, a1 * v);
  }
  lo -= 1.0L;
  auto mass = [&](long double tau) {
    long double s = 0.0L;
    for (double v : z) {
      const long double u = a1 * v - tau;
      if (u > 0) s += std::pow(u, 1.0L / a1);
    }
    return s;
  };
  for (int i = 0; i < iters; ++i) {
    const long double mid = (lo + hi) / 2;
    (mass(mid) >= 1.0L ? lo : hi) = mid;
  }
  std::vector<double> p(z.size());
  long double sum = 0.0L;
  std::vector<long double> raw(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const long double u = a1 * z[i] - lo;
    raw[i] = u > 0 ? std::pow(u, 1.0L / a1) : 0.0L;
    sum += raw[i];
  }
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = static_cast<double>(raw[i] / sum);
  return p;
}

inline std::vector<double> softmax_direct(const std::vector<double>& z, double t = 1.0) {
  std::vector<double> p(z.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) sum += std::exp(static_cast<long double>(z[i]) / t);
  for (std::size_t i = 0; i < z.size(); ++i)
    p[i] = static_cast<double>(std::exp(static_cast<long double>(z[i]) / t) / sum);
  return p;
}

// Expected monotonic alignment by enumerating every Bernoulli outcome matrix
// z in {0,1}^(U x S), running the hard left-to-right scan on each, and
// accumulating the outcome probability at the attended frame.
struct EnumeratedAlignment {
  Eigen::MatrixXd a;
  Eigen::VectorXd leftover;
};

inline EnumeratedAlignment enumerate_alignment(const Eigen::MatrixXd& p) {
  const int U = static_cast<int>(p.rows());
  const int S = static_cast<int>(p.cols());
  const int bits = U * S;
  EnumeratedAlignment out{Eigen::MatrixXd::Zero(U, S), Eigen::VectorXd::Zero(U)};
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << bits); ++mask) {
    double prob = 1.0;
    for (int b = 0; b < bits; ++b) {
      const double pij = p(b / S, b % S);
      prob *= (mask >> b) & 1u ? pij : 1.0 - pij;
    }
    int start = 0;
    for (int i = 0; i < U; ++i) {
      int stop = -1;
      for (int j = start; j < S; ++j) {
        if ((mask >> (i * S + j)) & 1u) {
          stop = j;
          break;
        }
      }
      if (stop < 0) {
        for (int k = i; k < U; ++k) out.leftover(k) += prob;
        break;
      }
      out.a(i, stop) += prob;
      start = stop;
    }
  }
  return out;
}

inline std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo,
                                          double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace entmono::oracle
