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
 * Backward passes for the simplex transforms.
 *
 * With s_j = p_j^(2 - alpha) on the support and 0 elsewhere, the alpha-entmax
 * Jacobian is  J = diag(s) - s s^T / sum(s),  which is the softmax Jacobian
 * diag(p) - p p^T at alpha = 1 and the sparsemax Jacobian at alpha = 2.
 *
 * Differentiating the threshold condition sum_j p_j = 1 in alpha gives, on
 * the support,
 *
 *   dp_i/dalpha = (q_i - s_i * sum(q) / sum(s)) / (alpha - 1),
 *   q_i         = s_i z_i - p_i log p_i,
 *
 * and zero off the support.
 */

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "entmono/transforms.hpp"

namespace entmono {

/// Values saved by a forward call and consumed by the backward routines.
struct BackwardContext {
  SparseDistribution probs;
  double alpha = 1.0;
  double temperature = 1.0;
  std::optional<LogitVector> z;  // needed only for the alpha derivative

  static BackwardContext capture(SparseDistribution p, double temperature = 1.0) {
    BackwardContext ctx;
    ctx.alpha = p.alpha;
    ctx.probs = std::move(p);
    ctx.temperature = temperature;
    return ctx;
  }
  static BackwardContext capture(SparseDistribution p, LogitVector z) {
    auto ctx = capture(std::move(p));
    ctx.z = std::move(z);
    return ctx;
  }
};

namespace detail {

inline void check_length(const BackwardContext& ctx, std::span<const double> v) {
  if (v.size() != ctx.probs.size()) {
    throw std::invalid_argument("vjp: cotangent length does not match distribution");
  }
}

}  // namespace detail

inline std::vector<double> softmax_vjp(const BackwardContext& ctx, std::span<const double> v) {
  detail::check_length(ctx, v);
  const auto& p = ctx.probs.probs;
  double pv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pv += p[i] * v[i];
  }
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    g[i] = p[i] * (v[i] - pv) / ctx.temperature;
  }
  return g;
}

inline std::vector<double> sparsemax_vjp(const BackwardContext& ctx, std::span<const double> v) {
  detail::check_length(ctx, v);
  const auto& support = ctx.probs.support;
  std::vector<double> g(v.size(), 0.0);
  if (support.empty()) {
    return g;
  }
  double sum = 0.0;
  for (auto j : support) {
    sum += v[j];
  }
  const double mean = sum / static_cast<double>(support.size());
  for (auto j : support) {
    g[j] = v[j] - mean;
  }
  return g;
}

inline std::vector<double> entmax_vjp(const BackwardContext& ctx, std::span<const double> v) {
  if (!(ctx.alpha > 1.0)) {
    throw std::invalid_argument("entmax_vjp: alpha must be > 1 (use softmax_vjp)");
  }
  detail::check_length(ctx, v);
  const auto& p = ctx.probs.probs;
  const double expo = 2.0 - ctx.alpha;
  std::vector<double> s(p.size(), 0.0);
  double ssum = 0.0;
  double sv = 0.0;
  for (auto j : ctx.probs.support) {
    s[j] = std::pow(p[j], expo);
    ssum += s[j];
    sv += s[j] * v[j];
  }
  std::vector<double> g(p.size(), 0.0);
  if (ssum == 0.0) {
    return g;
  }
  const double ratio = sv / ssum;
  for (auto j : ctx.probs.support) {
    g[j] = s[j] * (v[j] - ratio);
  }
  return g;
}

/// Vector-Jacobian product for whichever transform produced `ctx`.
inline std::vector<double> vjp(const BackwardContext& ctx, std::span<const double> v) {
  if (ctx.alpha == 1.0) {
    return softmax_vjp(ctx, v);
  }
  if (ctx.alpha == 2.0) {
    return sparsemax_vjp(ctx, v);
  }
  return entmax_vjp(ctx, v);
}

/// d p* / d alpha. Zero off the support.
inline std::vector<double> entmax_alpha_grad(const BackwardContext& ctx) {
  if (!ctx.z) {
    throw std::logic_error("entmax_alpha_grad: context does not retain logits");
  }
  if (!(ctx.alpha > 1.0)) {
    throw std::invalid_argument("entmax_alpha_grad: alpha must be > 1");
  }
  const auto& p = ctx.probs.probs;
  const auto& z = *ctx.z;
  if (z.size() != p.size()) {
    throw std::invalid_argument("entmax_alpha_grad: logits/probs length mismatch");
  }
  const double expo = 2.0 - ctx.alpha;
  // The gradient is shift invariant; centring z keeps q well scaled.
  const double m = z.max();
  std::vector<double> s(p.size(), 0.0);
  std::vector<double> q(p.size(), 0.0);
  double ssum = 0.0;
  double qsum = 0.0;
  for (auto j : ctx.probs.support) {
    s[j] = std::pow(p[j], expo);
    q[j] = s[j] * (z[j] - m) - p[j] * std::log(p[j]);
    ssum += s[j];
    qsum += q[j];
  }
  std::vector<double> g(p.size(), 0.0);
  if (ssum == 0.0) {
    return g;
  }
  const double ratio = qsum / ssum;
  const double scale = 1.0 / (ctx.alpha - 1.0);
  for (auto j : ctx.probs.support) {
    g[j] = (q[j] - s[j] * ratio) * scale;
  }
  return g;
}

/// Central finite-difference Jacobian; column j is dp/dz_j.
inline Eigen::MatrixXd finite_difference_jacobian(const TransformSpec& f, const LogitVector& z,
                                                  double eps = 1e-5) {
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd jac(n, n);
  std::vector<double> plus(z.values().begin(), z.values().end());
  std::vector<double> minus = plus;
  for (Eigen::Index j = 0; j < n; ++j) {
    plus[j] += eps;
    minus[j] -= eps;
    const auto fp = f(LogitVector(plus));
    const auto fm = f(LogitVector(minus));
    for (Eigen::Index i = 0; i < n; ++i) {
      jac(i, j) = (fp.probs[i] - fm.probs[i]) / (2.0 * eps);
    }
    plus[j] = z[j];
    minus[j] = z[j];
  }
  return jac;
}

/// Central finite difference of alpha-entmax in alpha, re-solving at alpha +- eps.
inline std::vector<double> finite_difference_alpha(const LogitVector& z, double alpha,
                                                   double eps = 1e-4, int iters = 100) {
  const auto fp = entmax_bisect(z, alpha + eps, iters);
  const auto fm = entmax_bisect(z, alpha - eps, iters);
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = (fp.probs[i] - fm.probs[i]) / (2.0 * eps);
  }
  return g;
}

/// J^T v from a dense Jacobian.
inline std::vector<double> jacobian_transpose_product(const Eigen::MatrixXd& jac,
                                                      std::span<const double> v) {
  Eigen::Map<const Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(v.size()));
  const Eigen::VectorXd g = jac.transpose() * vv;
  return {g.data(), g.data() + g.size()};
}

/// max|a - b| / max(|a|_inf, |b|_inf, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b,
                             double floor = 1e-6) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    na = std::max(na, std::abs(a[i]));
    nb = std::max(nb, std::abs(b[i]));
  }
  return diff / std::max({na, nb, floor});
}

/// Distance of a point from the nearest support change: the smallest support
/// probability, or the gap between the threshold and the largest excluded
/// scaled logit, whichever is smaller. Finite-difference checks are only
/// meaningful where this exceeds the step size by a wide margin.
inline double support_margin(const SparseDistribution& p, const LogitVector& z) {
  double margin = std::numeric_limits<double>::infinity();
  for (auto j : p.support) {
    margin = std::min(margin, p.probs[j]);
  }
  if (p.tau && p.support.size() < p.size()) {
    const double scale = p.alpha - 1.0;
    std::size_t k = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (k < p.support.size() && p.support[k] == j) {
        ++k;
        continue;
      }
      margin = std::min(margin, *p.tau - scale * z[j]);
    }
  }
  return margin;
}

}  // namespace entmono
