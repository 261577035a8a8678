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
 * Multi-head scaled dot-product attention with a per-head normalizer.
 *
 *   head_i = N_i(Q_i K_i^T / sqrt(d_model / h)) V_i,   Q_i = X Wq_i, ...
 *   O      = concat(head_1, ..., head_h) Wo
 *
 * N_i is softmax (optionally tempered), sparsemax, or alpha-entmax with a
 * fixed or learnable alpha. Masked keys are removed from the normalizer's
 * domain rather than pushed to -inf, because sparse transforms use finite
 * thresholds.
 */

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "entmono/gradients.hpp"
#include "entmono/random.hpp"
#include "entmono/transforms.hpp"

namespace entmono {

/// Interleaved sin/cos positional encoding, length x d_model.
inline Eigen::MatrixXd sinusoidal_pe(std::size_t length, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw std::invalid_argument("sinusoidal_pe: d_model must be a positive even number");
  }
  Eigen::MatrixXd pe(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(d_model));
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(2 * i)) = std::sin(angle);
      pe(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(2 * i + 1)) = std::cos(angle);
    }
  }
  return pe;
}

struct ProjectionWeights {
  std::vector<Eigen::MatrixXd> wq, wk, wv;  // per head, d_model x d_k
  Eigen::MatrixXd wo;                       // (h * d_k) x d_model

  std::size_t heads() const { return wq.size(); }
  Eigen::Index d_model() const { return wo.cols(); }
  Eigen::Index head_dim() const { return wq.empty() ? 0 : wq.front().cols(); }

  static ProjectionWeights zeros(Eigen::Index d_model, std::size_t heads) {
    if (heads == 0 || d_model % static_cast<Eigen::Index>(heads) != 0) {
      throw std::invalid_argument("ProjectionWeights: d_model must be divisible by head count");
    }
    const Eigen::Index dk = d_model / static_cast<Eigen::Index>(heads);
    ProjectionWeights w;
    w.wq.assign(heads, Eigen::MatrixXd::Zero(d_model, dk));
    w.wk = w.wq;
    w.wv = w.wq;
    w.wo = Eigen::MatrixXd::Zero(dk * static_cast<Eigen::Index>(heads), d_model);
    return w;
  }

  /// Uniform in [-1/sqrt(d_model), 1/sqrt(d_model)].
  static ProjectionWeights init(Eigen::Index d_model, std::size_t heads, Rng& rng) {
    auto w = zeros(d_model, heads);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
    auto fill = [&](Eigen::MatrixXd& m) {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = uniform(rng, -bound, bound);
    };
    for (std::size_t h = 0; h < heads; ++h) {
      fill(w.wq[h]);
      fill(w.wk[h]);
      fill(w.wv[h]);
    }
    fill(w.wo);
    return w;
  }

  void validate() const {
    const auto h = static_cast<Eigen::Index>(heads());
    if (h == 0 || wk.size() != wq.size() || wv.size() != wq.size()) {
      throw std::invalid_argument("ProjectionWeights: inconsistent head count");
    }
    const Eigen::Index d = d_model();
    if (d % h != 0 || head_dim() != d / h || wo.rows() != h * head_dim()) {
      throw std::invalid_argument("ProjectionWeights: head width must equal d_model / h");
    }
    for (std::size_t i = 0; i < heads(); ++i) {
      for (const auto* m : {&wq[i], &wk[i], &wv[i]}) {
        if (m->rows() != d || m->cols() != head_dim()) {
          throw std::invalid_argument("ProjectionWeights: projection shape mismatch");
        }
        if (!m->allFinite()) throw std::invalid_argument("ProjectionWeights: non-finite entry");
      }
    }
    if (!wo.allFinite()) throw std::invalid_argument("ProjectionWeights: non-finite entry");
  }
};

enum class NormalizerKind { kSoftmax, kSoftmaxTemperature, kSparsemax, kEntmaxFixed, kEntmaxAdaptive };

inline std::string to_string(NormalizerKind k) {
  switch (k) {
    case NormalizerKind::kSoftmax:
      return "softmax";
    case NormalizerKind::kSoftmaxTemperature:
      return "softmax-temperature";
    case NormalizerKind::kSparsemax:
      return "sparsemax";
    case NormalizerKind::kEntmaxFixed:
      return "entmax-fixed";
    case NormalizerKind::kEntmaxAdaptive:
      return "entmax-adaptive";
  }
  return "unknown";
}

inline NormalizerKind normalizer_kind_from_string(const std::string& s) {
  for (auto k : {NormalizerKind::kSoftmax, NormalizerKind::kSoftmaxTemperature,
                 NormalizerKind::kSparsemax, NormalizerKind::kEntmaxFixed,
                 NormalizerKind::kEntmaxAdaptive}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown normalizer kind: " + s);
}

struct HeadNormalizerConfig {
  NormalizerKind kind = NormalizerKind::kSoftmax;
  std::optional<Temperature> temp;       // softmax-temperature
  std::optional<AlphaParameter> alpha;   // entmax kinds

  static HeadNormalizerConfig softmax() { return {NormalizerKind::kSoftmax, {}, {}}; }
  static HeadNormalizerConfig softmax_temperature(double t) {
    return {NormalizerKind::kSoftmaxTemperature, Temperature(t), {}};
  }
  static HeadNormalizerConfig sparsemax() { return {NormalizerKind::kSparsemax, {}, {}}; }
  /// Fixed alpha in (1, 2); 1.5 by default.
  static HeadNormalizerConfig entmax_fixed(double alpha = 1.5) {
    if (!(alpha > 1.0 && alpha < 2.0)) {
      throw std::invalid_argument("entmax_fixed: alpha must lie in (1, 2)");
    }
    const double pre = alpha == 1.5 ? 0.0 : std::log((alpha - 1.0) / (2.0 - alpha));
    return {NormalizerKind::kEntmaxFixed, {}, AlphaParameter(pre)};
  }
  static HeadNormalizerConfig entmax_adaptive(double pre = 0.0) {
    return {NormalizerKind::kEntmaxAdaptive, {}, AlphaParameter(pre)};
  }
  static HeadNormalizerConfig of_kind(NormalizerKind k, double temperature = 1.0) {
    switch (k) {
      case NormalizerKind::kSoftmax:
        return softmax();
      case NormalizerKind::kSoftmaxTemperature:
        return softmax_temperature(temperature);
      case NormalizerKind::kSparsemax:
        return sparsemax();
      case NormalizerKind::kEntmaxFixed:
        return entmax_fixed();
      case NormalizerKind::kEntmaxAdaptive:
        return entmax_adaptive();
    }
    throw std::invalid_argument("unknown normalizer kind");
  }

  void validate() const {
    const bool needs_temp = kind == NormalizerKind::kSoftmaxTemperature;
    const bool needs_alpha =
        kind == NormalizerKind::kEntmaxFixed || kind == NormalizerKind::kEntmaxAdaptive;
    if (needs_temp != temp.has_value() || needs_alpha != alpha.has_value()) {
      throw std::invalid_argument("HeadNormalizerConfig: parameter does not match kind " +
                                  to_string(kind));
    }
  }

  bool adaptive() const { return kind == NormalizerKind::kEntmaxAdaptive; }
  double temperature() const { return temp ? temp->value() : 1.0; }
  double alpha_value() const {
    switch (kind) {
      case NormalizerKind::kSoftmax:
      case NormalizerKind::kSoftmaxTemperature:
        return 1.0;
      case NormalizerKind::kSparsemax:
        return 2.0;
      default:
        return alpha->alpha();
    }
  }

  SparseDistribution operator()(const LogitVector& z) const {
    switch (kind) {
      case NormalizerKind::kSoftmax:
        return entmono::softmax(z);
      case NormalizerKind::kSoftmaxTemperature:
        return entmono::softmax(z, *temp);
      case NormalizerKind::kSparsemax:
        return entmono::sparsemax(z);
      default:
        return entmax(z, alpha->alpha());
    }
  }
};

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

class AttentionMask {
 public:
  explicit AttentionMask(BoolMatrix allowed) : allowed_(std::move(allowed)) {
    for (Eigen::Index i = 0; i < allowed_.rows(); ++i) {
      if (!allowed_.row(i).any()) {
        throw std::invalid_argument("AttentionMask: query row has no allowed key");
      }
    }
  }
  static AttentionMask full(Eigen::Index queries, Eigen::Index keys) {
    return AttentionMask(BoolMatrix::Constant(queries, keys, true));
  }
  static AttentionMask causal(Eigen::Index length) {
    BoolMatrix m(length, length);
    for (Eigen::Index i = 0; i < length; ++i)
      for (Eigen::Index j = 0; j < length; ++j) m(i, j) = j <= i;
    return AttentionMask(std::move(m));
  }

  const BoolMatrix& allowed() const { return allowed_; }
  bool operator()(Eigen::Index i, Eigen::Index j) const { return allowed_(i, j); }
  Eigen::Index queries() const { return allowed_.rows(); }
  Eigen::Index keys() const { return allowed_.cols(); }

 private:
  BoolMatrix allowed_;
};

struct QKV {
  Eigen::MatrixXd q, k, v;
};

inline QKV project_qkv(const Eigen::MatrixXd& x, const ProjectionWeights& w, std::size_t head) {
  if (head >= w.heads()) {
    throw std::invalid_argument("project_qkv: head index out of range");
  }
  if (x.cols() != w.wq[head].rows()) {
    throw std::invalid_argument("project_qkv: input width does not match d_model");
  }
  return {x * w.wq[head], x * w.wk[head], x * w.wv[head]};
}

/// One normalized query row: its allowed key indices and the saved forward state.
struct AttentionRow {
  std::vector<Eigen::Index> keys;
  BackwardContext ctx;
};

struct AttentionHeadResult {
  Eigen::MatrixXd output;   // T x d_v
  Eigen::MatrixXd weights;  // T x S, exact zeros at masked keys
  std::vector<AttentionRow> rows;
};

inline AttentionHeadResult attention_head(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                          const Eigen::MatrixXd& v, const HeadNormalizerConfig& cfg,
                                          const AttentionMask& mask) {
  cfg.validate();
  if (q.cols() != k.cols() || k.rows() != v.rows() || mask.queries() != q.rows() ||
      mask.keys() != k.rows()) {
    throw std::invalid_argument("attention_head: shape mismatch");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  const Eigen::MatrixXd scores = (q * k.transpose()) * scale;
  AttentionHeadResult out;
  out.weights = Eigen::MatrixXd::Zero(q.rows(), k.rows());
  out.rows.reserve(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    AttentionRow row;
    std::vector<double> z;
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      if (mask(i, j)) {
        row.keys.push_back(j);
        z.push_back(scores(i, j));
      }
    }
    LogitVector logits(std::move(z));
    auto p = cfg(logits);
    for (std::size_t m = 0; m < row.keys.size(); ++m) {
      out.weights(i, row.keys[m]) = p.probs[m];
    }
    row.ctx = cfg.adaptive() ? BackwardContext::capture(std::move(p), std::move(logits))
                             : BackwardContext::capture(std::move(p), cfg.temperature());
    out.rows.push_back(std::move(row));
  }
  out.output = out.weights * v;
  return out;
}

struct HeadScoreStats {
  double mean_entropy = 0.0;       // Shannon entropy per row, averaged
  double zero_fraction = 0.0;      // exact zeros / allowed entries
  double rows_with_zero = 0.0;     // fraction of rows holding at least one exact zero
  std::array<std::size_t, 20> histogram{};  // allowed weights binned over [0, 1]
};

struct AttentionOutput {
  Eigen::MatrixXd context;  // T x d_model
  std::vector<QKV> projections;
  std::vector<AttentionHeadResult> heads;
  Eigen::MatrixXd concat;  // T x (h * d_v)
  std::vector<HeadScoreStats> stats;
};

namespace detail {

inline HeadScoreStats score_stats(const AttentionHeadResult& head) {
  HeadScoreStats s;
  std::size_t allowed = 0;
  std::size_t zeros = 0;
  std::size_t rows_zero = 0;
  for (const auto& row : head.rows) {
    const auto& p = row.ctx.probs.probs;
    s.mean_entropy += tsallis_entropy(std::span<const double>(p), 1.0);
    const std::size_t z = p.size() - row.ctx.probs.support.size();
    zeros += z;
    rows_zero += z > 0 ? 1 : 0;
    allowed += p.size();
    for (double w : p) {
      const auto bin = std::min<std::size_t>(19, static_cast<std::size_t>(w * 20.0));
      ++s.histogram[bin];
    }
  }
  const double rows = static_cast<double>(std::max<std::size_t>(1, head.rows.size()));
  s.mean_entropy /= rows;
  s.zero_fraction = allowed == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(allowed);
  s.rows_with_zero = static_cast<double>(rows_zero) / rows;
  return s;
}

}  // namespace detail

/// Self-attention over `x` with one normalizer per head.
inline AttentionOutput multi_head(const Eigen::MatrixXd& x, const ProjectionWeights& w,
                                  const std::vector<HeadNormalizerConfig>& cfgs,
                                  const AttentionMask& mask) {
  w.validate();
  if (cfgs.size() != w.heads()) {
    throw std::invalid_argument("multi_head: one normalizer config per head required");
  }
  AttentionOutput out;
  const Eigen::Index dk = w.head_dim();
  out.concat.resize(x.rows(), dk * static_cast<Eigen::Index>(w.heads()));
  for (std::size_t h = 0; h < w.heads(); ++h) {
    auto qkv = project_qkv(x, w, h);
    auto head = attention_head(qkv.q, qkv.k, qkv.v, cfgs[h], mask);
    out.concat.middleCols(static_cast<Eigen::Index>(h) * dk, dk) = head.output;
    out.projections.push_back(std::move(qkv));
    out.heads.push_back(std::move(head));
  }
  out.context = out.concat * w.wo;
  for (const auto& head : out.heads) {
    out.stats.push_back(detail::score_stats(head));
  }
  return out;
}

inline std::vector<HeadScoreStats> head_score_stats(const AttentionOutput& out) {
  std::vector<HeadScoreStats> s;
  for (const auto& head : out.heads) s.push_back(detail::score_stats(head));
  return s;
}

struct AttentionGrads {
  Eigen::MatrixXd x;
  std::vector<Eigen::MatrixXd> wq, wk, wv;
  Eigen::MatrixXd wo;
  std::vector<double> alpha_pre;  // zero for heads without a learnable alpha
};

/// Backward pass of multi_head given dL/d context.
inline AttentionGrads multi_head_backward(const Eigen::MatrixXd& x, const ProjectionWeights& w,
                                          const std::vector<HeadNormalizerConfig>& cfgs,
                                          const AttentionOutput& fwd,
                                          const Eigen::MatrixXd& dcontext) {
  const Eigen::Index dk = w.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  AttentionGrads g;
  g.x = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  g.wo = fwd.concat.transpose() * dcontext;
  const Eigen::MatrixXd dconcat = dcontext * w.wo.transpose();
  g.alpha_pre.assign(w.heads(), 0.0);
  for (std::size_t h = 0; h < w.heads(); ++h) {
    const auto& head = fwd.heads[h];
    const auto& qkv = fwd.projections[h];
    const Eigen::MatrixXd dhead = dconcat.middleCols(static_cast<Eigen::Index>(h) * dk, dk);
    const Eigen::MatrixXd dweights = dhead * qkv.v.transpose();
    const Eigen::MatrixXd dv = head.weights.transpose() * dhead;
    Eigen::MatrixXd dscores = Eigen::MatrixXd::Zero(head.weights.rows(), head.weights.cols());
    double dalpha = 0.0;
    for (std::size_t i = 0; i < head.rows.size(); ++i) {
      const auto& row = head.rows[i];
      std::vector<double> cot(row.keys.size());
      for (std::size_t m = 0; m < row.keys.size(); ++m) {
        cot[m] = dweights(static_cast<Eigen::Index>(i), row.keys[m]);
      }
      const auto gz = vjp(row.ctx, cot);
      for (std::size_t m = 0; m < row.keys.size(); ++m) {
        dscores(static_cast<Eigen::Index>(i), row.keys[m]) = gz[m];
      }
      if (cfgs[h].adaptive()) {
        const auto ga = entmax_alpha_grad(row.ctx);
        for (std::size_t m = 0; m < ga.size(); ++m) dalpha += ga[m] * cot[m];
      }
    }
    const Eigen::MatrixXd dq = dscores * qkv.k * scale;
    const Eigen::MatrixXd dk_ = dscores.transpose() * qkv.q * scale;
    g.wq.push_back(x.transpose() * dq);
    g.wk.push_back(x.transpose() * dk_);
    g.wv.push_back(x.transpose() * dv);
    g.x += dq * w.wq[h].transpose() + dk_ * w.wk[h].transpose() + dv * w.wv[h].transpose();
    if (cfgs[h].adaptive()) {
      g.alpha_pre[h] = dalpha * cfgs[h].alpha->dalpha_dpre();
    }
  }
  return g;
}

}  // namespace entmono
