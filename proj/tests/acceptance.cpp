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

// Acceptance suite. Prints one PASS/FAIL line per check and exits non-zero
// if any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "entmono/checks.hpp"
#include "entmono/monotonic.hpp"
#include "entmono/toy_train.hpp"
#include "entmono/transforms.hpp"
#include "oracles.hpp"

using namespace entmono;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::vector<double> draw(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  return oracle::uniform_vector(rng, n, lo, hi);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

Outcome simplex_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_sum = 0.0;
  double min_p = 1.0;
  for (int k = 0; k < 100000; ++k) {
    const LogitVector z(draw(rng, len(rng), -50.0, 50.0));
    const std::vector<SparseDistribution> outs{softmax(z), softmax(z, Temperature(0.5)), sparsemax(z),
                                               entmax15_exact(z), entmax_bisect(z, 1.0 + 1e-9 + unit(rng)),
                                               entmax(z, 1.0 + unit(rng))};
    for (const auto& p : outs) {
      double s = 0.0;
      for (double x : p.probs) {
        min_p = std::min(min_p, x);
        s += x;
      }
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
  }
  const double secs = seconds_since(t0);
  return {min_p >= 0.0 && worst_sum <= 1e-6 && secs < 60.0,
          "1e5 vectors x 6 transforms, min p " + fmt("%.3g", min_p) + ", max |sum-1| " + fmt("%.3g", worst_sum) +
              ", " + fmt("%.1f", secs) + " s"};
}

Outcome sparsemax_oracle() {
  std::mt19937_64 rng(102);
  std::uniform_int_distribution<std::size_t> len(1, 8);
  double worst = 0.0;
  int support_mismatch = 0;
  int no_solution = 0;
  for (int k = 0; k < 10000; ++k) {
    const auto z = draw(rng, len(rng), -2.0, 2.0);
    const auto p = sparsemax(LogitVector(z));
    const auto ref = oracle::sparsemax_exhaustive(z);
    if (!ref) {
      ++no_solution;
      continue;
    }
    if (ref->support != p.support) ++support_mismatch;
    worst = std::max(worst, max_abs_diff(p.probs, ref->probs));
  }
  return {worst <= 1e-9 && support_mismatch == 0 && no_solution == 0,
          "1e4 vectors n<=8, support mismatches " + std::to_string(support_mismatch) + ", max |dp| " +
              fmt("%.3g", worst)};
}

Outcome cross_check() {
  std::mt19937_64 rng(103);
  std::uniform_int_distribution<std::size_t> len(1, 64);
  double exact_vs_bisect = 0.0;
  double bisect2_vs_sparsemax = 0.0;
  double near1_vs_softmax = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const LogitVector z(draw(rng, len(rng), -50.0, 50.0));
    exact_vs_bisect = std::max(exact_vs_bisect, max_abs_diff(entmax15_exact(z).probs, entmax_bisect(z, 1.5, 50).probs));
    bisect2_vs_sparsemax =
        std::max(bisect2_vs_sparsemax, max_abs_diff(entmax_bisect(z, 2.0, 50).probs, sparsemax(z).probs));
    near1_vs_softmax = std::max(near1_vs_softmax, max_abs_diff(entmax_bisect(z, 1.0001, 50).probs, softmax(z).probs));
  }
  return {exact_vs_bisect <= 1e-6 && bisect2_vs_sparsemax <= 1e-6 && near1_vs_softmax <= 1e-3,
          "1e4 vectors in [-50,50]: exact vs bisect " + fmt("%.3g", exact_vs_bisect) + ", alpha=2 vs sparsemax " +
              fmt("%.3g", bisect2_vs_sparsemax) + ", alpha=1.0001 vs softmax " + fmt("%.3g", near1_vs_softmax)};
}

Outcome gradient_suite() {
  const auto suite = run_gradcheck_suite(1000, 8, 104);
  std::string detail = "1e3 points each, eps 1e-5:";
  for (const auto& e : suite.entries) detail += " " + e.name + " " + fmt("%.2g", e.max_rel_err);
  return {suite.pass(), detail};
}

Outcome expected_alignment_oracle() {
  std::mt19937_64 rng(105);
  std::uniform_int_distribution<int> steps(1, 3);
  std::uniform_int_distribution<int> frames(1, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Eigen::MatrixXd p = Eigen::MatrixXd::NullaryExpr(steps(rng), frames(rng), [&] { return u(rng); });
    const auto fast = expected_alignment(SelectionProbabilities(p));
    const auto ref = oracle::enumerate_alignment(p);
    worst = std::max(worst, (fast.a - ref.a).cwiseAbs().maxCoeff());
    worst = std::max(worst, (fast.leftover - ref.leftover).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-10, "1e3 instances S<=6 U<=3, max |da| " + fmt("%.3g", worst)};
}

Outcome hard_decode() {
  std::mt19937_64 rng(106);
  std::uniform_int_distribution<int> dim(1, 12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  int irreproducible = 0;
  for (int k = 0; k < 10000; ++k) {
    const SelectionProbabilities p(Eigen::MatrixXd::NullaryExpr(dim(rng), dim(rng), [&] { return u(rng); }));
    BernoulliSampler s1(static_cast<std::uint64_t>(k));
    BernoulliSampler s2(static_cast<std::uint64_t>(k));
    const auto threshold = hard_monotonic_decode(p);
    const auto sampled = hard_monotonic_decode(p, s1);
    const auto again = hard_monotonic_decode(p, s2);
    for (const auto* path : {&threshold, &sampled}) {
      for (std::size_t i = 1; i < path->t.size(); ++i) violations += path->t[i] < path->t[i - 1] ? 1 : 0;
    }
    irreproducible += sampled.t != again.t ? 1 : 0;
  }
  return {violations == 0 && irreproducible == 0,
          "1e4 matrices, monotonicity violations " + std::to_string(violations) + ", seed mismatches " +
              std::to_string(irreproducible)};
}

struct Runs {
  TrainingResult plain;
  TrainingResult penalized;
  double plain_seconds = 0.0;
};

Outcome toy_training(const Runs& r) {
  const auto& t = r.plain.trace;
  double final_alpha_move = 0.0;
  for (double a : t.rows.back().alpha) final_alpha_move = std::max(final_alpha_move, std::abs(a - 1.5));
  const double drop = 1.0 - t.rows.back().loss / t.rows.front().loss;
  const bool ok = !t.diverged && r.plain.eval.token_accuracy >= 0.95 && r.plain.eval.alignment_accuracy >= 0.90 &&
                  r.plain_seconds <= 300.0 && final_alpha_move >= 0.05;
  return {ok, "token acc " + fmt("%.4f", r.plain.eval.token_accuracy) + ", alignment acc " +
                  fmt("%.4f", r.plain.eval.alignment_accuracy) + ", " + fmt("%.1f", r.plain_seconds) +
                  " s, final |alpha-1.5| " + fmt("%.4f", final_alpha_move) + ", loss drop " +
                  fmt("%.1f%%", 100.0 * drop)};
}

Outcome sparsity(const Runs& r) {
  const auto& model = r.plain.model;
  const auto& stats = r.plain.eval.encoder_stats;
  bool ok = !stats.empty();
  std::string detail;
  for (std::size_t h = 0; h < stats.size(); ++h) {
    const auto kind = model.kinds[h];
    detail += (h ? "; " : "") + to_string(kind) + " zero frac " + fmt("%.3f", stats[h].zero_fraction) +
              ", rows with zero " + fmt("%.3f", stats[h].rows_with_zero);
    if (kind == NormalizerKind::kSoftmax || kind == NormalizerKind::kSoftmaxTemperature) {
      ok = ok && stats[h].zero_fraction == 0.0;
    }
    if (kind == NormalizerKind::kSparsemax || kind == NormalizerKind::kEntmaxFixed) {
      ok = ok && stats[h].rows_with_zero >= 0.5;
    }
  }
  return {ok, detail};
}

Outcome pruning(const Runs& r) {
  const auto& pen = r.penalized.eval;
  const auto& plain = r.plain.eval;
  std::size_t pruned = 0;
  for (std::size_t m = 1; m < pen.mean_selection_prob.size(); ++m) {
    if (pen.mean_selection_prob[m] < pen.mean_selection_prob[pruned]) pruned = m;
  }
  double survivor = 0.0;
  for (std::size_t m = 0; m < pen.mean_selection_prob.size(); ++m) {
    if (m != pruned) survivor = std::max(survivor, pen.mean_selection_prob[m]);
  }
  const double degrade = plain.token_accuracy - pen.token_accuracy;
  const bool ok = !r.penalized.trace.diverged && pen.mean_selection_prob[pruned] < 0.1 && degrade <= 0.01;
  return {ok, "lambda=0.01 head " + std::to_string(pruned) + " mean p " + fmt("%.3g", pen.mean_selection_prob[pruned]) +
                  " (lambda=0: " + fmt("%.3f", plain.mean_selection_prob[pruned]) + "), survivor " +
                  fmt("%.3f", survivor) + ", token acc " + fmt("%.4f", plain.token_accuracy) + " -> " +
                  fmt("%.4f", pen.token_accuracy)};
}

double bench_ns(const std::string& kind) {
  const std::string cmd = std::string(ENTMONO_CLI) + " bench --kind " + kind + " --dim 512 --batch 1024 --iters 5";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[512];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  if (pclose(pipe) != 0) return std::nan("");
  std::stringstream ss(out);
  std::string line;
  std::getline(ss, line);
  std::getline(ss, line);
  std::vector<std::string> cells;
  std::stringstream rs(line);
  for (std::string c; std::getline(rs, c, ',');) cells.push_back(c);
  return cells.size() == 5 ? std::stod(cells[3]) : std::nan("");
}

Outcome performance() {
  const double soft = bench_ns("softmax");
  const double ent = bench_ns("entmax15");
  const double ratio = ent / soft;
  return {std::isfinite(ratio) && ratio <= 8.0,
          "n=512 batch=1024: softmax " + fmt("%.0f", soft) + " ns/row, entmax15 " + fmt("%.0f", ent) +
              " ns/row, ratio " + fmt("%.2f", ratio)};
}

}  // namespace

int main() {
  int failed = 0;
  int index = 0;
  auto report = [&](const std::string& name, const Outcome& o) {
    ++index;
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << index << "  " << name << ": " << o.detail << std::endl;
  };
  report("simplex suite", simplex_suite());
  report("sparsemax oracle equivalence", sparsemax_oracle());
  report("algorithm cross-check", cross_check());
  report("gradient suite", gradient_suite());
  report("expected alignment enumeration", expected_alignment_oracle());
  report("hard-decode monotonicity", hard_decode());

  Runs runs;
  const SyntheticTask task;  // vocab 16, U 10, r 2, 2000 samples
  TrainerConfig cfg;
  const auto t0 = std::chrono::steady_clock::now();
  runs.plain = train(cfg, task);
  runs.plain_seconds = seconds_since(t0);
  cfg.lambda = 0.01;
  runs.penalized = train(cfg, task);
  report("toy training", toy_training(runs));
  report("sparsity diagnostic", sparsity(runs));
  report("head pruning", pruning(runs));
  report("performance sanity", performance());

  std::cout << (index - failed) << "/" << index << " checks passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
