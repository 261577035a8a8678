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
 * Desk-scale training harness.
 *
 * Task: each target token is rendered as `upsample` consecutive noisy copies
 * of its embedding, so token i occupies frames [r*i, r*i + r). Consecutive
 * tokens always differ, which keeps token boundaries observable from content.
 *
 * Model: one self-attention encoder layer (residual, per-head normalizers,
 * sinusoidal positions) and one decoder layer of monotonic attention heads.
 * Decoder state s_{i-1} is the embedding of the previous target token (a BOS
 * row for i = 1). Each monotonic head attends through its expected
 * alignment during training and through a hard left-to-right scan at
 * evaluation. Alignments are never supervised.
 *
 * Loss per sequence: sum of token cross-entropies plus the L1 penalty on the
 * selection probabilities of the filtered decoder layers; averaged over the
 * batch.
 */

#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "entmono/attention.hpp"
#include "entmono/gradients.hpp"
#include "entmono/monotonic.hpp"
#include "entmono/random.hpp"

namespace entmono {

struct SyntheticTask {
  std::size_t vocab_size = 16;
  std::size_t output_length = 10;  // U
  std::size_t upsample = 2;        // r; input length S = r * U
  std::size_t samples = 2000;
  std::size_t eval_samples = 200;
  std::uint64_t seed = 1;
  double noise = 0.1;

  std::size_t input_length() const { return upsample * output_length; }

  void validate() const {
    if (vocab_size < 2 || output_length < 1 || upsample < 1 || samples < 1) {
      throw std::invalid_argument("SyntheticTask: vocab >= 2, lengths >= 1, samples >= 1");
    }
    if (!(noise >= 0.0)) throw std::invalid_argument("SyntheticTask: noise must be >= 0");
  }
};

struct Sample {
  Eigen::MatrixXd frames;            // S x d
  std::vector<std::size_t> tokens;   // U
  std::vector<std::size_t> gold;     // U, first frame of each token
};

struct Dataset {
  Eigen::MatrixXd embeddings;  // vocab x d
  std::vector<Sample> train;
  std::vector<Sample> eval;
};

inline Dataset gen_task(const SyntheticTask& task, Eigen::Index width) {
  task.validate();
  Rng rng(task.seed);
  Dataset ds;
  ds.embeddings.resize(static_cast<Eigen::Index>(task.vocab_size), width);
  for (Eigen::Index j = 0; j < ds.embeddings.cols(); ++j)
    for (Eigen::Index i = 0; i < ds.embeddings.rows(); ++i) ds.embeddings(i, j) = normal(rng);

  const std::size_t S = task.input_length();
  auto make = [&] {
    Sample s;
    s.frames.resize(static_cast<Eigen::Index>(S), width);
    for (std::size_t i = 0; i < task.output_length; ++i) {
      std::size_t tok = uniform_index(rng, task.vocab_size);
      if (i > 0) {
        // uniform over the vocab minus the previous token
        tok = uniform_index(rng, task.vocab_size - 1);
        if (tok >= s.tokens.back()) ++tok;
      }
      s.tokens.push_back(tok);
      s.gold.push_back(task.upsample * i);
      for (std::size_t k = 0; k < task.upsample; ++k) {
        const auto row = static_cast<Eigen::Index>(task.upsample * i + k);
        for (Eigen::Index c = 0; c < width; ++c) {
          s.frames(row, c) = ds.embeddings(static_cast<Eigen::Index>(tok), c) + normal(rng, 0.0, task.noise);
        }
      }
    }
    return s;
  };
  for (std::size_t n = 0; n < task.samples; ++n) ds.train.push_back(make());
  for (std::size_t n = 0; n < task.eval_samples; ++n) ds.eval.push_back(make());
  return ds;
}

/// Fraction of steps whose attended frame is within `tol` of gold; an
/// exhausted scan counts as a miss.
inline double eval_alignment(const AlignmentPath& predicted, const std::vector<std::size_t>& gold,
                             std::size_t tol) {
  if (predicted.t.size() != gold.size()) {
    throw std::invalid_argument("eval_alignment: length mismatch");
  }
  if (gold.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted.ended(i)) continue;
    const std::size_t t = predicted.t[i];
    const std::size_t diff = t > gold[i] ? t - gold[i] : gold[i] - t;
    hits += diff <= tol ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

struct TrainerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  std::size_t steps = 10000;
  std::size_t batch_size = 8;
  std::vector<NormalizerKind> encoder_heads{NormalizerKind::kEntmaxAdaptive, NormalizerKind::kSoftmax,
                                            NormalizerKind::kSparsemax, NormalizerKind::kEntmaxFixed};
  double temperature = 1.0;  // for softmax-temperature heads
  std::size_t decoder_heads = 2;
  Eigen::Index d_model = 32;
  Eigen::Index energy_dim = 16;
  double lambda = 0.0;
  std::set<std::size_t> l1_layers = shallow_layers(1);
  double energy_noise = 2.0;
  std::uint64_t seed = 1;
  std::size_t log_interval = 50;
  std::size_t monitor_samples = 32;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainerConfig: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("TrainerConfig: batch_size must be >= 1");
    if (encoder_heads.empty() || d_model % static_cast<Eigen::Index>(encoder_heads.size()) != 0) {
      throw std::invalid_argument("TrainerConfig: d_model must be divisible by encoder heads");
    }
    if (decoder_heads < 1 || d_model % static_cast<Eigen::Index>(decoder_heads) != 0) {
      throw std::invalid_argument("TrainerConfig: d_model must be divisible by decoder heads");
    }
    if (d_model % 2 != 0) throw std::invalid_argument("TrainerConfig: d_model must be even");
    if (!(lambda >= 0.0)) throw std::invalid_argument("TrainerConfig: lambda must be >= 0");
    if (!(energy_noise >= 0.0)) throw std::invalid_argument("TrainerConfig: energy_noise must be >= 0");
    if (log_interval < 1) throw std::invalid_argument("TrainerConfig: log_interval must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
      throw std::invalid_argument("TrainerConfig: Adam betas must lie in [0, 1)");
    }
  }
};

/// Named view of one parameter tensor.
struct TensorRef {
  std::string name;
  double* data;
  Eigen::Index size;
};

struct ToyModel {
  std::vector<NormalizerKind> kinds;
  double temperature = 1.0;
  ProjectionWeights enc;
  Eigen::VectorXd alpha_pre;                 // per encoder head
  Eigen::MatrixXd dec_embed;                 // (vocab + 1) x d, last row is BOS
  std::vector<MonotonicEnergyParams> energy; // per decoder head
  std::vector<Eigen::MatrixXd> dec_value;    // per decoder head, d x d_v
  Eigen::MatrixXd out_w;                     // (heads * d_v) x vocab
  Eigen::VectorXd out_b;

  std::size_t vocab() const { return static_cast<std::size_t>(out_b.size()); }
  std::size_t bos() const { return vocab(); }
  std::size_t decoder_heads() const { return energy.size(); }
  Eigen::Index d_model() const { return enc.d_model(); }

  std::vector<HeadNormalizerConfig> encoder_configs() const {
    std::vector<HeadNormalizerConfig> cfgs;
    for (std::size_t h = 0; h < kinds.size(); ++h) {
      auto cfg = HeadNormalizerConfig::of_kind(kinds[h], temperature);
      if (kinds[h] == NormalizerKind::kEntmaxAdaptive) {
        cfg.alpha->set_pre(alpha_pre(static_cast<Eigen::Index>(h)));
      }
      cfgs.push_back(cfg);
    }
    return cfgs;
  }

  std::vector<std::size_t> adaptive_heads() const {
    std::vector<std::size_t> out;
    for (std::size_t h = 0; h < kinds.size(); ++h)
      if (kinds[h] == NormalizerKind::kEntmaxAdaptive) out.push_back(h);
    return out;
  }

  std::vector<TensorRef> tensors() {
    std::vector<TensorRef> t;
    auto add = [&](std::string name, auto& m) { t.push_back({std::move(name), m.data(), m.size()}); };
    for (std::size_t h = 0; h < enc.heads(); ++h) {
      add("enc.wq" + std::to_string(h), enc.wq[h]);
      add("enc.wk" + std::to_string(h), enc.wk[h]);
      add("enc.wv" + std::to_string(h), enc.wv[h]);
    }
    add("enc.wo", enc.wo);
    add("enc.alpha_pre", alpha_pre);
    add("dec.embed", dec_embed);
    for (std::size_t m = 0; m < energy.size(); ++m) {
      const auto k = std::to_string(m);
      add("mono" + k + ".ws", energy[m].ws);
      add("mono" + k + ".wh", energy[m].wh);
      add("mono" + k + ".b", energy[m].b);
      add("mono" + k + ".v", energy[m].v);
      t.push_back({"mono" + k + ".g", &energy[m].g, 1});
      t.push_back({"mono" + k + ".r", &energy[m].r, 1});
      add("mono" + k + ".wvalue", dec_value[m]);
    }
    add("out.w", out_w);
    add("out.b", out_b);
    return t;
  }

  /// Same shapes, all zeros.
  ToyModel zeros_like() const {
    ToyModel z = *this;
    for (auto& t : z.tensors()) std::fill(t.data, t.data + t.size, 0.0);
    return z;
  }

  static ToyModel init(const TrainerConfig& cfg, std::size_t vocab, Rng& rng) {
    cfg.validate();
    const Eigen::Index d = cfg.d_model;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    auto fill = [&](Eigen::MatrixXd& m, double b) {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = uniform(rng, -b, b);
    };
    ToyModel model;
    model.kinds = cfg.encoder_heads;
    model.temperature = cfg.temperature;
    model.enc = ProjectionWeights::init(d, cfg.encoder_heads.size(), rng);
    model.alpha_pre = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.encoder_heads.size()));
    model.dec_embed.resize(static_cast<Eigen::Index>(vocab + 1), d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < model.dec_embed.rows(); ++i) model.dec_embed(i, j) = normal(rng);
    const Eigen::Index dv = d / static_cast<Eigen::Index>(cfg.decoder_heads);
    for (std::size_t m = 0; m < cfg.decoder_heads; ++m) {
      MonotonicEnergyParams e;
      e.ws.resize(d, cfg.energy_dim);
      e.wh.resize(d, cfg.energy_dim);
      fill(e.ws, bound);
      fill(e.wh, bound);
      e.b = Eigen::VectorXd::Zero(cfg.energy_dim);
      e.v.resize(cfg.energy_dim);
      for (Eigen::Index k = 0; k < e.v.size(); ++k) e.v(k) = uniform(rng, -1.0, 1.0);
      e.g = 1.0;
      e.r = -1.0;
      model.energy.push_back(std::move(e));
      Eigen::MatrixXd wv(d, dv);
      fill(wv, bound);
      model.dec_value.push_back(std::move(wv));
    }
    model.out_w.resize(dv * static_cast<Eigen::Index>(cfg.decoder_heads), static_cast<Eigen::Index>(vocab));
    fill(model.out_w, bound);
    model.out_b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vocab));
    return model;
  }
};

struct EncoderPass {
  Eigen::MatrixXd x0;  // frames + positions
  std::vector<HeadNormalizerConfig> cfgs;
  AttentionOutput att;
  Eigen::MatrixXd h;  // x0 + attention
};

inline EncoderPass encode(const ToyModel& model, const Eigen::MatrixXd& frames) {
  EncoderPass e;
  e.x0 = frames + sinusoidal_pe(static_cast<std::size_t>(frames.rows()),
                                static_cast<std::size_t>(frames.cols()));
  e.cfgs = model.encoder_configs();
  e.att = multi_head(e.x0, model.enc, e.cfgs, AttentionMask::full(frames.rows(), frames.rows()));
  e.h = e.x0 + e.att.context;
  return e;
}

namespace detail {

inline double log_softmax_ce(const Eigen::VectorXd& logits, std::size_t target, Eigen::VectorXd* grad) {
  const double m = logits.maxCoeff();
  const Eigen::ArrayXd ex = (logits.array() - m).exp();
  const double z = ex.sum();
  if (grad) {
    *grad = (ex / z).matrix();
    (*grad)(static_cast<Eigen::Index>(target)) -= 1.0;
  }
  return std::log(z) + m - logits(static_cast<Eigen::Index>(target));
}

}  // namespace detail

struct SampleLoss {
  double loss = 0.0;
  double cross_entropy = 0.0;
  double penalty = 0.0;
  std::vector<Eigen::MatrixXd> selection;  // per decoder head, U x S
  double min_margin = std::numeric_limits<double>::infinity();
};

/// Teacher-forced loss of one sample; accumulates gradients into `grads`
/// (scaled by `weight`) when non-null.
struct LossOptions {
  double lambda = 0.0;
  std::set<std::size_t> l1_layers = shallow_layers(1);
  double energy_noise = 0.0;  // std of Gaussian noise added to energies
  Rng* rng = nullptr;         // required when energy_noise > 0
};

inline SampleLoss sample_loss(const ToyModel& model, const Sample& sample, const LossOptions& opt,
                              ToyModel* grads = nullptr, double weight = 1.0) {
  const auto enc = encode(model, sample.frames);
  const Eigen::Index U = static_cast<Eigen::Index>(sample.tokens.size());
  const Eigen::Index S = enc.h.rows();
  const Eigen::Index d = model.d_model();
  const Eigen::Index dv = model.dec_value.front().cols();
  const std::size_t H = model.decoder_heads();
  const bool penalize = opt.l1_layers.contains(0);
  const double lambda = opt.lambda;
  if (opt.energy_noise > 0.0 && opt.rng == nullptr) {
    throw std::invalid_argument("sample_loss: energy noise requires a generator");
  }

  Eigen::MatrixXd states(U, d);
  for (Eigen::Index i = 0; i < U; ++i) {
    const std::size_t prev = i == 0 ? model.bos() : sample.tokens[static_cast<std::size_t>(i - 1)];
    states.row(i) = model.dec_embed.row(static_cast<Eigen::Index>(prev));
  }

  SampleLoss out;
  std::vector<SelectionProbabilities> sel;
  std::vector<ExpectedAlignment> align;
  std::vector<Eigen::MatrixXd> values;
  Eigen::MatrixXd concat(U, dv * static_cast<Eigen::Index>(H));
  for (std::size_t m = 0; m < H; ++m) {
    Eigen::MatrixXd e = monotonic_energy_matrix(states, enc.h, model.energy[m]);
    if (opt.energy_noise > 0.0) {
      for (Eigen::Index j = 0; j < e.cols(); ++j)
        for (Eigen::Index i = 0; i < e.rows(); ++i) e(i, j) += normal(*opt.rng, 0.0, opt.energy_noise);
    }
    sel.push_back(SelectionProbabilities::from_energies(e));
    align.push_back(expected_alignment(sel.back()));
    values.push_back(enc.h * model.dec_value[m]);
    concat.middleCols(static_cast<Eigen::Index>(m) * dv, dv) = align.back().a * values.back();
    out.selection.push_back(sel.back().matrix());
    if (penalize) out.penalty += lambda * sel.back().matrix().sum();
  }
  const Eigen::MatrixXd logits = (concat * model.out_w).rowwise() + model.out_b.transpose();
  Eigen::MatrixXd dlogits(U, logits.cols());
  for (Eigen::Index i = 0; i < U; ++i) {
    Eigen::VectorXd g;
    out.cross_entropy += detail::log_softmax_ce(logits.row(i).transpose(),
                                                sample.tokens[static_cast<std::size_t>(i)], &g);
    dlogits.row(i) = g.transpose();
  }
  out.loss = out.cross_entropy + out.penalty;
  for (std::size_t h = 0; h < enc.att.heads.size(); ++h) {
    const auto& qkv = enc.att.projections[h];
    const double scale = 1.0 / std::sqrt(static_cast<double>(qkv.q.cols()));
    for (std::size_t i = 0; i < enc.att.heads[h].rows.size(); ++i) {
      const auto& row = enc.att.heads[h].rows[i];
      if (row.ctx.alpha == 1.0) continue;
      const Eigen::VectorXd z = qkv.k * qkv.q.row(static_cast<Eigen::Index>(i)).transpose() * scale;
      out.min_margin = std::min(out.min_margin, support_margin(row.ctx.probs, LogitVector(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())))));
    }
  }
  if (!grads) return out;

  dlogits *= weight;
  grads->out_w += concat.transpose() * dlogits;
  grads->out_b += dlogits.colwise().sum().transpose();
  const Eigen::MatrixXd dconcat = dlogits * model.out_w.transpose();
  Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(S, d);
  Eigen::MatrixXd dstates = Eigen::MatrixXd::Zero(U, d);
  for (std::size_t m = 0; m < H; ++m) {
    const Eigen::MatrixXd dc = dconcat.middleCols(static_cast<Eigen::Index>(m) * dv, dv);
    const Eigen::MatrixXd da = dc * values[m].transpose();
    const Eigen::MatrixXd dvals = align[m].a.transpose() * dc;
    grads->dec_value[m] += enc.h.transpose() * dvals;
    dh += dvals * model.dec_value[m].transpose();
    Eigen::MatrixXd dp = expected_alignment_backward(sel[m], align[m], da);
    if (penalize) dp.array() += lambda * weight;
    const auto& p = sel[m].matrix();
    const Eigen::MatrixXd de = (dp.array() * p.array() * (1.0 - p.array())).matrix();
    const auto eg = monotonic_energy_matrix_backward(states, enc.h, model.energy[m], de);
    auto& ge = grads->energy[m];
    ge.ws += eg.ws;
    ge.wh += eg.wh;
    ge.b += eg.b;
    ge.v += eg.v;
    ge.g += eg.g;
    ge.r += eg.r;
    dh += eg.enc;
    dstates += eg.states;
  }
  for (Eigen::Index i = 0; i < U; ++i) {
    const std::size_t prev = i == 0 ? model.bos() : sample.tokens[static_cast<std::size_t>(i - 1)];
    grads->dec_embed.row(static_cast<Eigen::Index>(prev)) += dstates.row(i);
  }
  const auto ag = multi_head_backward(enc.x0, model.enc, enc.cfgs, enc.att, dh);
  for (std::size_t h = 0; h < model.enc.heads(); ++h) {
    grads->enc.wq[h] += ag.wq[h];
    grads->enc.wk[h] += ag.wk[h];
    grads->enc.wv[h] += ag.wv[h];
    grads->alpha_pre(static_cast<Eigen::Index>(h)) += ag.alpha_pre[h];
  }
  grads->enc.wo += ag.wo;
  return out;
}

/// Greedy autoregressive decoding with hard monotonic attention (p >= 0.5).
struct DecodeResult {
  std::vector<std::size_t> tokens;
  std::vector<AlignmentPath> paths;  // per decoder head
};

inline DecodeResult greedy_decode(const ToyModel& model, const Eigen::MatrixXd& frames, std::size_t steps) {
  const auto enc = encode(model, frames);
  const std::size_t S = static_cast<std::size_t>(enc.h.rows());
  const std::size_t H = model.decoder_heads();
  const Eigen::Index dv = model.dec_value.front().cols();
  std::vector<Eigen::MatrixXd> values;
  for (std::size_t m = 0; m < H; ++m) values.push_back(enc.h * model.dec_value[m]);
  DecodeResult r;
  r.paths.assign(H, AlignmentPath{{}, S});
  std::vector<std::size_t> start(H, 0);
  std::size_t prev = model.bos();
  for (std::size_t i = 0; i < steps; ++i) {
    const Eigen::MatrixXd s = model.dec_embed.row(static_cast<Eigen::Index>(prev));
    Eigen::VectorXd c(dv * static_cast<Eigen::Index>(H));
    for (std::size_t m = 0; m < H; ++m) {
      std::size_t t = AlignmentPath::kEnd;
      if (start[m] != AlignmentPath::kEnd) {
        const Eigen::MatrixXd e = monotonic_energy_matrix(s, enc.h, model.energy[m]);
        t = monotonic_scan(start[m], S, [&](std::size_t j) {
          return selection_prob(e(0, static_cast<Eigen::Index>(j))) >= 0.5;
        });
      }
      r.paths[m].t.push_back(t);
      start[m] = t;
      const auto frame = static_cast<Eigen::Index>(r.paths[m].context_frame(i));
      c.segment(static_cast<Eigen::Index>(m) * dv, dv) = values[m].row(frame).transpose();
    }
    const Eigen::VectorXd logits = model.out_w.transpose() * c + model.out_b;
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    prev = static_cast<std::size_t>(best);
    r.tokens.push_back(prev);
  }
  return r;
}

struct TraceRow {
  std::size_t step = 0;
  double loss = 0.0;
  std::vector<double> alpha;  // one per adaptive encoder head
};

struct EvalReport {
  double token_accuracy = 0.0;
  double alignment_accuracy = 0.0;              // most active decoder head
  std::vector<double> head_alignment_accuracy;  // per decoder head
  std::vector<double> mean_selection_prob;      // per decoder head, teacher forced
  std::vector<HeadScoreStats> encoder_stats;    // per encoder head, averaged over samples
  std::vector<DecodeResult> decodes;
};

inline EvalReport evaluate(const ToyModel& model, const std::vector<Sample>& samples, std::size_t tol = 1) {
  EvalReport rep;
  const std::size_t H = model.decoder_heads();
  rep.head_alignment_accuracy.assign(H, 0.0);
  rep.mean_selection_prob.assign(H, 0.0);
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<double> sel_count(H, 0.0);
  for (const auto& s : samples) {
    auto d = greedy_decode(model, s.frames, s.tokens.size());
    for (std::size_t i = 0; i < s.tokens.size(); ++i) correct += d.tokens[i] == s.tokens[i] ? 1 : 0;
    total += s.tokens.size();
    for (std::size_t m = 0; m < H; ++m) {
      rep.head_alignment_accuracy[m] += eval_alignment(d.paths[m], s.gold, tol);
    }
    const auto tf = sample_loss(model, s, LossOptions{0.0, {}});
    const auto stats = encode(model, s.frames).att.stats;
    rep.encoder_stats.resize(stats.size());
    for (std::size_t h = 0; h < stats.size(); ++h) {
      rep.encoder_stats[h].mean_entropy += stats[h].mean_entropy;
      rep.encoder_stats[h].zero_fraction += stats[h].zero_fraction;
      rep.encoder_stats[h].rows_with_zero += stats[h].rows_with_zero;
      for (std::size_t b = 0; b < stats[h].histogram.size(); ++b) rep.encoder_stats[h].histogram[b] += stats[h].histogram[b];
    }
    for (std::size_t m = 0; m < H; ++m) {
      rep.mean_selection_prob[m] += tf.selection[m].sum();
      sel_count[m] += static_cast<double>(tf.selection[m].size());
    }
    rep.decodes.push_back(std::move(d));
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, samples.size()));
  for (auto& st : rep.encoder_stats) {
    st.mean_entropy /= n;
    st.zero_fraction /= n;
    st.rows_with_zero /= n;
  }
  std::size_t active = 0;
  for (std::size_t m = 0; m < H; ++m) {
    rep.head_alignment_accuracy[m] /= n;
    rep.mean_selection_prob[m] /= std::max(1.0, sel_count[m]);
    if (rep.mean_selection_prob[m] > rep.mean_selection_prob[active]) active = m;
  }
  rep.token_accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  rep.alignment_accuracy = H == 0 ? 0.0 : rep.head_alignment_accuracy[active];
  return rep;
}

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps = 1e-9)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(Eigen::VectorXd::Zero(p.size));
        v_.emplace_back(Eigen::VectorXd::Zero(p.size));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Eigen::Map<Eigen::VectorXd> p(params[k].data, params[k].size);
      Eigen::Map<const Eigen::VectorXd> g(grads[k].data, grads[k].size);
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseProduct(g);
      p.array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Eigen::VectorXd> m_, v_;
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
  std::vector<std::size_t> adaptive_heads;
  bool diverged = false;
  std::string failure;  // reason when diverged
  double seconds = 0.0;
};

struct TrainingResult {
  TrainingTrace trace;
  ToyModel model;
  EvalReport eval;
};

inline double monitor_loss(const ToyModel& model, const Dataset& ds, const TrainerConfig& cfg) {
  const std::size_t n = std::min(cfg.monitor_samples, ds.train.size());
  double total = 0.0;
  const LossOptions opt{cfg.lambda, cfg.l1_layers};
  for (std::size_t k = 0; k < n; ++k) total += sample_loss(model, ds.train[k], opt).loss;
  return total / static_cast<double>(std::max<std::size_t>(1, n));
}

inline TraceRow trace_row(const ToyModel& model, std::size_t step, double loss) {
  TraceRow row{step, loss, {}};
  for (auto h : model.adaptive_heads()) {
    row.alpha.push_back(AlphaParameter(model.alpha_pre(static_cast<Eigen::Index>(h))).alpha());
  }
  return row;
}

/// Adam on the batch-mean loss. Deterministic given (cfg, task).
inline TrainingResult train(const TrainerConfig& cfg, const SyntheticTask& task) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const Dataset ds = gen_task(task, cfg.d_model);
  Rng rng(cfg.seed);
  TrainingResult result;
  result.model = ToyModel::init(cfg, task.vocab_size, rng);
  auto& model = result.model;
  auto& trace = result.trace;
  trace.adaptive_heads = model.adaptive_heads();
  trace.rows.push_back(trace_row(model, 0, monitor_loss(model, ds, cfg)));

  Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2);
  Rng noise_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const LossOptions opt{cfg.lambda, cfg.l1_layers, cfg.energy_noise, &noise_rng};
  std::vector<std::size_t> order(ds.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto fail = [&](std::size_t step, std::string why) {
    trace.diverged = true;
    trace.failure = std::move(why);
    trace.rows.push_back(trace_row(model, step, nan));
  };
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    ToyModel grads = model.zeros_like();
    double batch_loss = 0.0;
    try {
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        if (cursor == order.size()) {
          for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
          cursor = 0;
        }
        const auto& sample = ds.train[order[cursor++]];
        batch_loss += sample_loss(model, sample, opt, &grads, 1.0 / static_cast<double>(cfg.batch_size)).loss;
      }
    } catch (const std::invalid_argument& e) {
      fail(step, std::string("non-finite activations: ") + e.what());
      break;
    }
    if (!std::isfinite(batch_loss)) {
      fail(step, "non-finite loss");
      break;
    }
    adam.step(model.tensors(), grads.tensors());
    bool finite = true;
    for (const auto& t : model.tensors())
      finite = finite && Eigen::Map<const Eigen::VectorXd>(t.data, t.size).allFinite();
    if (!finite) {
      fail(step, "non-finite parameters");
      break;
    }
    if (step % cfg.log_interval == 0 || step == cfg.steps) {
      const double loss = monitor_loss(model, ds, cfg);
      trace.rows.push_back(trace_row(model, step, loss));
      if (!std::isfinite(loss)) {
        trace.diverged = true;
        trace.failure = "non-finite loss";
        break;
      }
    }
  }
  if (trace.diverged) {
    trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  }
  result.eval = evaluate(model, ds.eval);
  trace.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::vector<std::pair<std::string, double>> per_tensor;
  double support_margin = 0.0;
};

/// Central-difference check of every parameter gradient of the batch loss.
/// `filter` selects tensors by name prefix (empty: all).
inline GradcheckReport gradcheck_model(const ToyModel& model, const std::vector<Sample>& batch,
                                       const LossOptions& opt, double eps = 1e-6,
                                       const std::string& filter = "") {
  if (opt.energy_noise > 0.0) throw std::invalid_argument("gradcheck_model: loss must be deterministic");
  ToyModel work = model;
  ToyModel grads = model.zeros_like();
  GradcheckReport rep;
  rep.support_margin = std::numeric_limits<double>::infinity();
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    rep.support_margin = std::min(rep.support_margin, sample_loss(model, s, opt, &grads, w).min_margin);
  }
  auto loss = [&] {
    double total = 0.0;
    for (const auto& s : batch) total += sample_loss(work, s, opt).loss;
    return total * w;
  };
  auto params = work.tensors();
  auto analytic = grads.tensors();
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!filter.empty() && params[k].name.rfind(filter, 0) != 0) continue;
    std::vector<double> a(analytic[k].data, analytic[k].data + analytic[k].size);
    std::vector<double> f(a.size());
    for (Eigen::Index i = 0; i < params[k].size; ++i) {
      double& x = params[k].data[i];
      const double keep = x;
      x = keep + eps;
      const double up = loss();
      x = keep - eps;
      const double dn = loss();
      x = keep;
      f[static_cast<std::size_t>(i)] = (up - dn) / (2.0 * eps);
    }
    const double err = relative_error(a, f);
    rep.per_tensor.emplace_back(params[k].name, err);
    rep.max_rel_err = std::max(rep.max_rel_err, err);
  }
  return rep;
}

}  // namespace entmono
