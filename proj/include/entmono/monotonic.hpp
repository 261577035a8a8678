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
 * Hard monotonic attention and its differentiable expectation.
 *
 * For output step i the decoder scans encoder frames left to right starting
 * at the frame attended at step i-1. Each frame j is selected with
 * probability p_ij = sigmoid(e_ij); the first selected frame becomes t_i.
 * Training uses the expected alignment a_ij = P(t_i = j), which obeys
 *
 *   a_ij = p_ij * sum_{k<=j} a_{i-1,k} * prod_{l=k}^{j-1} (1 - p_il),
 *
 * with a_0 a point mass on frame 0.
 */

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "entmono/transforms.hpp"

namespace entmono {

/// Parameters of  e = g * (v / |v|) . tanh(Ws^T s + Wh^T h + b) + r.
struct MonotonicEnergyParams {
  Eigen::MatrixXd ws;  // state width x d
  Eigen::MatrixXd wh;  // encoder width x d
  Eigen::VectorXd b;   // d
  Eigen::VectorXd v;   // d
  double g = 1.0;
  double r = -1.0;

  Eigen::Index hidden() const { return b.size(); }

  void validate() const {
    const auto d = b.size();
    if (ws.cols() != d || wh.cols() != d || v.size() != d) {
      throw std::invalid_argument("MonotonicEnergyParams: inconsistent hidden width");
    }
    if (!ws.allFinite() || !wh.allFinite() || !b.allFinite() || !v.allFinite() ||
        !std::isfinite(g) || !std::isfinite(r)) {
      throw std::invalid_argument("MonotonicEnergyParams: non-finite parameter");
    }
    if (v.norm() == 0.0) {
      throw std::invalid_argument("MonotonicEnergyParams: direction v is zero");
    }
  }
};

inline double monotonic_energy(const Eigen::VectorXd& s_prev, const Eigen::VectorXd& h,
                               const MonotonicEnergyParams& params) {
  params.validate();
  if (s_prev.size() != params.ws.rows() || h.size() != params.wh.rows()) {
    throw std::invalid_argument("monotonic_energy: state width mismatch");
  }
  const Eigen::VectorXd pre = params.ws.transpose() * s_prev + params.wh.transpose() * h + params.b;
  return params.g * params.v.normalized().dot(pre.array().tanh().matrix()) + params.r;
}

/// Energies for every (decoder step, encoder frame) pair. Rows of `states`
/// are s_{i-1}; rows of `enc` are h_j.
inline Eigen::MatrixXd monotonic_energy_matrix(const Eigen::MatrixXd& states,
                                               const Eigen::MatrixXd& enc,
                                               const MonotonicEnergyParams& params) {
  params.validate();
  if (states.cols() != params.ws.rows() || enc.cols() != params.wh.rows()) {
    throw std::invalid_argument("monotonic_energy_matrix: state width mismatch");
  }
  const Eigen::MatrixXd a = states * params.ws;                                    // U x d
  const Eigen::MatrixXd c = (enc * params.wh).rowwise() + params.b.transpose();  // S x d
  const Eigen::VectorXd dir = params.v.normalized() * params.g;
  Eigen::MatrixXd e(states.rows(), enc.rows());
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      e(i, j) = (a.row(i) + c.row(j)).array().tanh().matrix().dot(dir) + params.r;
    }
  }
  return e;
}

struct MonotonicEnergyGrads {
  Eigen::MatrixXd ws;
  Eigen::MatrixXd wh;
  Eigen::VectorXd b;
  Eigen::VectorXd v;
  double g = 0.0;
  double r = 0.0;
  Eigen::MatrixXd states;  // dL/ds_{i-1}
  Eigen::MatrixXd enc;     // dL/dh_j
};

inline MonotonicEnergyGrads monotonic_energy_matrix_backward(const Eigen::MatrixXd& states,
                                                             const Eigen::MatrixXd& enc,
                                                             const MonotonicEnergyParams& params,
                                                             const Eigen::MatrixXd& de) {
  const auto d = params.hidden();
  const Eigen::MatrixXd a = states * params.ws;
  const Eigen::MatrixXd c = (enc * params.wh).rowwise() + params.b.transpose();
  const double vnorm = params.v.norm();
  const Eigen::VectorXd vhat = params.v / vnorm;

  Eigen::MatrixXd dpre_a = Eigen::MatrixXd::Zero(states.rows(), d);
  Eigen::MatrixXd dpre_c = Eigen::MatrixXd::Zero(enc.rows(), d);
  Eigen::VectorXd th_acc = Eigen::VectorXd::Zero(d);  // sum de * tanh(pre)
  MonotonicEnergyGrads grads;
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    for (Eigen::Index j = 0; j < enc.rows(); ++j) {
      const double w = de(i, j);
      if (w == 0.0) continue;
      const Eigen::ArrayXd th = (a.row(i) + c.row(j)).transpose().array().tanh();
      th_acc += w * th.matrix();
      const Eigen::VectorXd dpre = (w * params.g) * (vhat.array() * (1.0 - th * th)).matrix();
      dpre_a.row(i) += dpre.transpose();
      dpre_c.row(j) += dpre.transpose();
      grads.r += w;
    }
  }
  grads.g = vhat.dot(th_acc);
  grads.v = params.g * (th_acc - vhat * vhat.dot(th_acc)) / vnorm;
  grads.ws = states.transpose() * dpre_a;
  grads.wh = enc.transpose() * dpre_c;
  grads.b = dpre_c.colwise().sum().transpose();
  grads.states = dpre_a * params.ws.transpose();
  grads.enc = dpre_c * params.wh.transpose();
  return grads;
}

inline double selection_prob(double e) { return sigmoid(e); }

/// Per-frame selection probabilities, one row per output step.
class SelectionProbabilities {
 public:
  explicit SelectionProbabilities(Eigen::MatrixXd p) : p_(std::move(p)) {
    if (p_.rows() == 0 || p_.cols() == 0) {
      throw std::invalid_argument("SelectionProbabilities: empty matrix");
    }
    if (!p_.allFinite() || p_.minCoeff() < 0.0 || p_.maxCoeff() > 1.0) {
      throw std::invalid_argument("SelectionProbabilities: entries must lie in [0, 1]");
    }
  }
  static SelectionProbabilities from_energies(const Eigen::MatrixXd& e) {
    return SelectionProbabilities(e.unaryExpr([](double x) { return sigmoid(x); }));
  }

  const Eigen::MatrixXd& matrix() const { return p_; }
  Eigen::Index steps() const { return p_.rows(); }
  Eigen::Index frames() const { return p_.cols(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return p_(i, j); }

 private:
  Eigen::MatrixXd p_;
};

/// Attended frame per output step; kEnd marks a scan that ran off the input.
struct AlignmentPath {
  static constexpr std::size_t kEnd = std::numeric_limits<std::size_t>::max();

  std::vector<std::size_t> t;
  std::size_t frames = 0;

  bool ended(std::size_t i) const { return t[i] == kEnd; }
  /// Frame whose state forms the context: the final frame after an exhausted scan.
  std::size_t context_frame(std::size_t i) const { return ended(i) ? frames - 1 : t[i]; }

  /// Rows of `enc` gathered along the path.
  Eigen::MatrixXd contexts(const Eigen::MatrixXd& enc) const {
    if (static_cast<std::size_t>(enc.rows()) != frames) {
      throw std::invalid_argument("AlignmentPath::contexts: frame count mismatch");
    }
    Eigen::MatrixXd c(static_cast<Eigen::Index>(t.size()), enc.cols());
    for (std::size_t i = 0; i < t.size(); ++i) {
      c.row(static_cast<Eigen::Index>(i)) = enc.row(static_cast<Eigen::Index>(context_frame(i)));
    }
    return c;
  }
};

/// Seeded Bernoulli source. Uses the top 53 bits of mt19937_64 directly so
/// draws are identical across standard libraries.
class BernoulliSampler {
 public:
  explicit BernoulliSampler(std::uint64_t seed) : rng_(seed) {}
  bool operator()(double p) {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return u < p;
  }

 private:
  std::mt19937_64 rng_;
};

/// One left-to-right scan from `start`; returns the first frame for which
/// `trigger(j)` fires, or kEnd.
template <typename Trigger>
std::size_t monotonic_scan(std::size_t start, std::size_t frames, Trigger&& trigger) {
  for (std::size_t j = start; j < frames; ++j) {
    if (trigger(j)) {
      return j;
    }
  }
  return AlignmentPath::kEnd;
}

namespace detail {

template <typename Trigger>
AlignmentPath decode(const SelectionProbabilities& p, Trigger&& trigger) {
  AlignmentPath path;
  path.frames = static_cast<std::size_t>(p.frames());
  std::size_t start = 0;
  for (Eigen::Index i = 0; i < p.steps(); ++i) {
    const std::size_t t = start == AlignmentPath::kEnd
                              ? AlignmentPath::kEnd
                              : monotonic_scan(start, path.frames, [&](std::size_t j) {
                                  return trigger(p(i, static_cast<Eigen::Index>(j)));
                                });
    path.t.push_back(t);
    start = t;
  }
  return path;
}

}  // namespace detail

/// Deterministic inference rule: frame j triggers iff p_ij >= 0.5.
inline AlignmentPath hard_monotonic_decode(const SelectionProbabilities& p) {
  return detail::decode(p, [](double pij) { return pij >= 0.5; });
}

/// Stochastic rule: z_ij ~ Bernoulli(p_ij) from the caller's sampler.
inline AlignmentPath hard_monotonic_decode(const SelectionProbabilities& p,
                                           BernoulliSampler& sampler) {
  return detail::decode(p, [&](double pij) { return sampler(pij); });
}

struct ExpectedAlignment {
  Eigen::MatrixXd a;         // steps x frames
  Eigen::VectorXd leftover;  // mass whose scan has run off the input
};

inline ExpectedAlignment expected_alignment(const SelectionProbabilities& sel) {
  const auto& p = sel.matrix();
  const Eigen::Index U = p.rows();
  const Eigen::Index S = p.cols();
  ExpectedAlignment out{Eigen::MatrixXd::Zero(U, S), Eigen::VectorXd::Zero(U)};
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(S);
  prev(0) = 1.0;
  double lost = 0.0;
  for (Eigen::Index i = 0; i < U; ++i) {
    // q_j: probability the scan for step i reaches frame j undecided.
    double q = 0.0;
    for (Eigen::Index j = 0; j < S; ++j) {
      q = (j == 0 ? 0.0 : q * (1.0 - p(i, j - 1))) + prev(j);
      out.a(i, j) = p(i, j) * q;
    }
    lost += q * (1.0 - p(i, S - 1));
    out.leftover(i) = lost;
    prev = out.a.row(i).transpose();
  }
  return out;
}

/// Reverse-mode pass of expected_alignment: dL/dp given dL/da.
inline Eigen::MatrixXd expected_alignment_backward(const SelectionProbabilities& sel,
                                                   const ExpectedAlignment& fwd,
                                                   const Eigen::MatrixXd& da) {
  const auto& p = sel.matrix();
  const Eigen::Index U = p.rows();
  const Eigen::Index S = p.cols();
  Eigen::MatrixXd dp = Eigen::MatrixXd::Zero(U, S);
  Eigen::VectorXd carry = Eigen::VectorXd::Zero(S);  // dL/d a_i from step i+1
  Eigen::VectorXd q(S);
  for (Eigen::Index i = U - 1; i >= 0; --i) {
    const Eigen::VectorXd prev = i == 0 ? Eigen::VectorXd::Unit(S, 0)
                                        : Eigen::VectorXd(fwd.a.row(i - 1).transpose());
    double qj = 0.0;
    for (Eigen::Index j = 0; j < S; ++j) {
      qj = (j == 0 ? 0.0 : qj * (1.0 - p(i, j - 1))) + prev(j);
      q(j) = qj;
    }
    Eigen::VectorXd dprev(S);
    double dq_next = 0.0;
    for (Eigen::Index j = S - 1; j >= 0; --j) {
      const double ga = da(i, j) + carry(j);
      const double dq = ga * p(i, j) + dq_next * (j + 1 < S ? 1.0 - p(i, j) : 0.0);
      dp(i, j) = ga * q(j) - (j + 1 < S ? dq_next * q(j) : 0.0);
      dprev(j) = dq;
      dq_next = dq;
    }
    carry = dprev;
  }
  return dp;
}

/// Default L1 layer filter: the first half of the decoder stack (at least one layer).
inline std::set<std::size_t> shallow_layers(std::size_t num_layers) {
  std::set<std::size_t> out;
  const std::size_t n = std::max<std::size_t>(1, num_layers / 2);
  for (std::size_t l = 0; l < std::min(n, num_layers); ++l) {
    out.insert(l);
  }
  return out;
}

/// lambda * sum |p_ij| over every head of every layer in `layer_filter`.
/// `layers[l][h]` holds head h of decoder layer l.
inline double head_l1_penalty(const std::vector<std::vector<SelectionProbabilities>>& layers,
                              double lambda, const std::set<std::size_t>& layer_filter) {
  if (!(lambda >= 0.0)) {
    throw std::invalid_argument("head_l1_penalty: lambda must be non-negative");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!layer_filter.contains(l)) continue;
    for (const auto& head : layers[l]) {
      total += head.matrix().cwiseAbs().sum();
    }
  }
  return lambda * total;
}

}  // namespace entmono
