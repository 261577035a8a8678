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
 * Simplex-normalizing transforms.
 *
 * Every transform maps a finite logit vector z onto the probability simplex:
 *
 *   softmax:      p_i = exp(z_i / t) / sum_j exp(z_j / t)
 *   sparsemax:    p   = [z - tau]_+                        (alpha = 2)
 *   alpha-entmax: p   = [(alpha - 1) z - tau]_+^(1/(alpha-1))
 *
 * where tau is the unique threshold making p sum to one. alpha-entmax is the
 * maximizer of p.z + H_alpha(p) for the Tsallis entropy H_alpha, so alpha = 1
 * recovers softmax and alpha = 2 recovers sparsemax.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace entmono {

/// Raw pre-normalization scores. Non-empty and finite by construction.
class LogitVector {
 public:
  explicit LogitVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) {
      throw std::invalid_argument("LogitVector: empty input");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("LogitVector: non-finite entry");
      }
    }
  }
  LogitVector(std::initializer_list<double> values)
      : LogitVector(std::vector<double>(values)) {}
  explicit LogitVector(std::span<const double> values)
      : LogitVector(std::vector<double>(values.begin(), values.end())) {}

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }

 private:
  std::vector<double> values_;
};

/// A point on the simplex together with the support and threshold that
/// produced it. `tau` is absent for softmax, which has no threshold.
struct SparseDistribution {
  std::vector<double> probs;
  std::vector<std::size_t> support;
  std::optional<double> tau;
  double alpha = 1.0;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
};

/// Softmax temperature; strictly positive.
class Temperature {
 public:
  explicit Temperature(double t = 1.0) : t_(t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw std::invalid_argument("Temperature: must be positive and finite");
    }
  }
  double value() const { return t_; }

 private:
  double t_;
};

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Learnable sparsity alpha = 1 + sigmoid(pre), always inside (1, 2).
class AlphaParameter {
 public:
  explicit AlphaParameter(double pre = 0.0) : pre_(pre) {}

  double pre() const { return pre_; }
  void set_pre(double pre) { pre_ = pre; }
  double alpha() const { return 1.0 + sigmoid(pre_); }
  /// d alpha / d pre = (alpha - 1)(2 - alpha).
  double dalpha_dpre() const {
    const double s = sigmoid(pre_);
    return s * (1.0 - s);
  }

 private:
  double pre_;
};

namespace detail {

inline SparseDistribution finish(std::vector<double> probs, std::optional<double> tau,
                                 double alpha) {
  SparseDistribution out;
  out.support.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) {
      out.support.push_back(i);
    }
  }
  out.probs = std::move(probs);
  out.tau = tau;
  out.alpha = alpha;
  return out;
}

inline SparseDistribution point_mass(double tau, double alpha) {
  return finish({1.0}, tau, alpha);
}

// Values of `x` strictly above `floor`, sorted descending. Entries at or
// below a lower bound on the threshold can never enter the support, so only
// the survivors need sorting.
inline std::vector<double> sorted_candidates(std::span<const double> x, double floor) {
  std::vector<double> c;
  c.reserve(x.size());
  for (double v : x) {
    if (v > floor) {
      c.push_back(v);
    }
  }
  std::sort(c.begin(), c.end(), std::greater<double>());
  return c;
}

}  // namespace detail

inline SparseDistribution softmax(const LogitVector& z, Temperature temp = Temperature{}) {
  const double t = temp.value();
  const auto zs = z.values();
  const double m = z.max() / t;
  std::vector<double> p(zs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    p[i] = std::exp(zs[i] / t - m);
    sum += p[i];
  }
  for (double& v : p) {
    v /= sum;
  }
  return detail::finish(std::move(p), std::nullopt, 1.0);
}

inline SparseDistribution sparsemax(const LogitVector& z) {
  const auto zs = z.values();
  const double m = z.max();
  if (zs.size() == 1) {
    return detail::point_mass(m - 1.0, 2.0);
  }
  std::vector<double> x(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) {
    x[i] = zs[i] - m;
  }
  // tau >= max(x) - 1 = -1
  const auto sorted = detail::sorted_candidates(x, -1.0);
  double cumsum = 0.0;
  double tau = sorted[0] - 1.0;
  for (std::size_t k = 1; k <= sorted.size(); ++k) {
    cumsum += sorted[k - 1];
    if (1.0 + static_cast<double>(k) * sorted[k - 1] > cumsum) {
      tau = (cumsum - 1.0) / static_cast<double>(k);
    }
  }
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    p[i] = std::max(x[i] - tau, 0.0);
  }
  return detail::finish(std::move(p), tau + m, 2.0);
}

/// Exact 1.5-entmax via the sort-based threshold on the halved logits.
inline SparseDistribution entmax15_exact(const LogitVector& z) {
  const auto zs = z.values();
  const double m = z.max();
  if (zs.size() == 1) {
    return detail::point_mass(m / 2.0 - 1.0, 1.5);
  }
  std::vector<double> x(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) {
    x[i] = (zs[i] - m) / 2.0;
  }
  const auto sorted = detail::sorted_candidates(x, -1.0);
  double s1 = 0.0;
  double s2 = 0.0;
  double tau = sorted[0] - 1.0;
  for (std::size_t k = 1; k <= sorted.size(); ++k) {
    const double kd = static_cast<double>(k);
    s1 += sorted[k - 1];
    s2 += sorted[k - 1] * sorted[k - 1];
    const double mean = s1 / kd;
    const double var = s2 / kd - mean * mean;
    const double delta = (1.0 - kd * var) / kd;
    const double tau_k = mean - std::sqrt(std::max(delta, 0.0));
    if (tau_k <= sorted[k - 1]) {
      tau = tau_k;
    }
  }
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = std::max(x[i] - tau, 0.0);
    p[i] = u * u;
  }
  return detail::finish(std::move(p), tau + m / 2.0, 1.5);
}

inline constexpr int kDefaultBisectIters = 50;

/// alpha-entmax for any alpha > 1 by bisection on the threshold.
inline SparseDistribution entmax_bisect(const LogitVector& z, double alpha,
                                        int iters = kDefaultBisectIters) {
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("entmax_bisect: alpha must be > 1 (use softmax for alpha = 1)");
  }
  if (iters < 1) {
    throw std::invalid_argument("entmax_bisect: iters must be >= 1");
  }
  const auto zs = z.values();
  const double m = z.max();
  const double am1 = alpha - 1.0;
  const double expo = 1.0 / am1;
  if (zs.size() == 1) {
    return detail::point_mass(am1 * m - 1.0, alpha);
  }
  std::vector<double> y(zs.size());
  double ymin = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    y[i] = am1 * (zs[i] - m);
    ymin = std::min(ymin, y[i]);
  }
  auto mass = [&](double tau) {
    double s = 0.0;
    for (double v : y) {
      if (v > tau) {
        s += std::pow(v - tau, expo);
      }
    }
    return s;
  };
  double lo = ymin - 1.0;
  double hi = 0.0;
  for (int it = 0; it < iters; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) >= 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double tau = lo;
  std::vector<double> p(y.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    p[i] = y[i] > tau ? std::pow(y[i] - tau, expo) : 0.0;
    sum += p[i];
  }
  for (double& v : p) {
    v /= sum;
  }
  return detail::finish(std::move(p), tau + am1 * m, alpha);
}

/// Dispatches to the specialised routine for alpha in {1, 1.5, 2}.
inline SparseDistribution entmax(const LogitVector& z, double alpha) {
  if (!(alpha >= 1.0)) {
    throw std::invalid_argument("entmax: alpha must be >= 1");
  }
  if (alpha == 1.0) {
    return softmax(z);
  }
  if (alpha == 2.0) {
    return sparsemax(z);
  }
  if (alpha == 1.5) {
    return entmax15_exact(z);
  }
  return entmax_bisect(z, alpha);
}

/// Tsallis alpha-entropy; Shannon entropy at alpha = 1.
inline double tsallis_entropy(std::span<const double> p, double alpha) {
  if (!(alpha >= 1.0)) {
    throw std::invalid_argument("tsallis_entropy: alpha must be >= 1");
  }
  double h = 0.0;
  if (alpha == 1.0) {
    for (double v : p) {
      if (v > 0.0) {
        h -= v * std::log(v);
      }
    }
    return h;
  }
  for (double v : p) {
    h += v - std::pow(v, alpha);
  }
  return h / (alpha * (alpha - 1.0));
}

inline double tsallis_entropy(const SparseDistribution& p, double alpha) {
  return tsallis_entropy(std::span<const double>(p.probs), alpha);
}

enum class TransformKind { kSoftmax, kSparsemax, kEntmax15, kEntmaxBisect };

/// A transform together with its parameters, evaluable on any logit vector.
struct TransformSpec {
  TransformKind kind = TransformKind::kSoftmax;
  double alpha = 1.5;        // kEntmaxBisect only
  double temperature = 1.0;  // kSoftmax only
  int iters = kDefaultBisectIters;

  static TransformSpec softmax_t(double t = 1.0) { return {TransformKind::kSoftmax, 1.0, t}; }
  static TransformSpec sparsemax_t() { return {TransformKind::kSparsemax, 2.0}; }
  static TransformSpec entmax15_t() { return {TransformKind::kEntmax15, 1.5}; }
  static TransformSpec bisect_t(double alpha, int iters = kDefaultBisectIters) {
    return {TransformKind::kEntmaxBisect, alpha, 1.0, iters};
  }

  SparseDistribution operator()(const LogitVector& z) const {
    switch (kind) {
      case TransformKind::kSoftmax:
        return softmax(z, Temperature{temperature});
      case TransformKind::kSparsemax:
        return sparsemax(z);
      case TransformKind::kEntmax15:
        return entmax15_exact(z);
      case TransformKind::kEntmaxBisect:
        return entmax_bisect(z, alpha, iters);
    }
    throw std::logic_error("TransformSpec: unknown kind");
  }

  /// The alpha of the entropy family this transform belongs to.
  double family_alpha() const {
    switch (kind) {
      case TransformKind::kSoftmax:
        return 1.0;
      case TransformKind::kSparsemax:
        return 2.0;
      case TransformKind::kEntmax15:
        return 1.5;
      case TransformKind::kEntmaxBisect:
        return alpha;
    }
    return alpha;
  }

  std::string name() const {
    switch (kind) {
      case TransformKind::kSoftmax:
        return "softmax";
      case TransformKind::kSparsemax:
        return "sparsemax";
      case TransformKind::kEntmax15:
        return "entmax15";
      case TransformKind::kEntmaxBisect:
        return "entmax_bisect";
    }
    return "unknown";
  }
};

}  // namespace entmono
