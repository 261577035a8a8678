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

// entmono command-line tool.
//
// Exit codes: 0 success, 1 check or convergence failure, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "entmono/bench.hpp"
#include "entmono/checks.hpp"
#include "entmono/run_io.hpp"

namespace fs = std::filesystem;
using namespace entmono;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

std::vector<double> parse_logits(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("cannot parse logit '" + item + "'");
    }
    if (used != item.size()) throw UsageError("cannot parse logit '" + item + "'");
    out.push_back(x);
  }
  if (out.empty() || text.back() == ',') throw UsageError("--logits needs a comma-separated list of numbers");
  return out;
}

fs::path resolve_out_dir(const Globals& g, const RunConfig& cfg) {
  if (g.out) return *g.out;
  if (const char* env = std::getenv("RUN_OUT_DIR"); env && *env) return env;
  if (cfg.out_dir) return *cfg.out_dir;
  return "run";
}

RunConfig load_config(const Globals& g, const std::string& path) {
  auto cfg = load_run_config(path);
  if (g.seed) cfg.set_seed(*g.seed);
  return cfg;
}

int cmd_transform(const std::string& kind, double alpha, double temp, const std::string& logits) {
  const LogitVector z(parse_logits(logits));
  SparseDistribution p;
  if (kind == "softmax") {
    p = softmax(z, Temperature(temp));
  } else if (kind == "sparsemax") {
    p = sparsemax(z);
  } else if (kind == "entmax15") {
    p = entmax15_exact(z);
  } else {
    p = entmax(z, alpha);
  }
  std::cout << csv_row(p.probs) << '\n';
  return kOk;
}

int cmd_gradcheck(std::size_t trials, std::size_t dim, std::uint64_t seed, const std::string& report) {
  const auto suite = run_gradcheck_suite(trials, dim, seed);
  Json checks = Json::object();
  for (const auto& e : suite.entries) {
    checks[e.name] = {{"max_rel_err", e.max_rel_err},
                      {"tolerance", e.tolerance},
                      {"checked", e.checked},
                      {"rejected", e.rejected},
                      {"pass", e.pass}};
  }
  const Json doc{{"trials", trials},
                 {"dim", dim},
                 {"seed", seed},
                 {"margin_floor", kMarginFloor},
                 {"checks", checks},
                 {"pass", suite.pass()}};
  const std::string text = doc.dump(2) + "\n";
  if (!report.empty()) atomic_write(report, text);
  std::cout << text;
  return suite.pass() ? kOk : kFailed;
}

int cmd_bench(const std::string& kind, std::size_t dim, std::size_t batch, std::size_t iters, std::uint64_t seed) {
  const auto r = run_bench(kind, dim, batch, iters, seed);
  std::cout << "kind,dim,batch,ns_per_row_mean,ns_per_row_std\n"
            << r.kind << ',' << r.dim << ',' << r.batch << ',' << fmt6(r.ns_per_row_mean) << ','
            << fmt6(r.ns_per_row_std) << '\n';
  return kOk;
}

int cmd_train(const Globals& g, const std::string& config) {
  const auto cfg = load_config(g, config);
  const fs::path out = resolve_out_dir(g, cfg);
  const auto result = train(cfg.trainer, cfg.task);
  atomic_write(out / "trace.csv", trace_csv(result.trace));
  atomic_write(out / "heads.json", heads_json(result).dump(2) + "\n");
  if (result.trace.diverged) {
    std::cerr << "training diverged: " << result.trace.failure << '\n';
    return kFailed;
  }
  const auto ds = gen_task(cfg.task, cfg.trainer.d_model);
  atomic_write(out / "alignment.csv", alignment_csv(ds.eval, result.eval));
  atomic_write(out / "model.json", model_json(result.model).dump() + "\n");
  std::cout << "token_accuracy=" << fmt6(result.eval.token_accuracy)
            << " alignment_accuracy=" << fmt6(result.eval.alignment_accuracy)
            << " final_loss=" << fmt6(result.trace.rows.back().loss) << " seconds=" << fmt6(result.trace.seconds)
            << " out=" << out.string() << '\n';
  return kOk;
}

int cmd_attmap(const Globals& g, const std::string& config, std::size_t sample) {
  const auto cfg = load_config(g, config);
  const fs::path out = resolve_out_dir(g, cfg);
  const fs::path model_path = out / "model.json";
  std::ifstream in(model_path);
  if (!in) throw UsageError("no trained run at " + out.string() + " (missing model.json)");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw UsageError(model_path.string() + ": " + e.what());
  }
  const auto model = model_from_json(doc);
  const auto ds = gen_task(cfg.task, model.d_model());
  if (sample >= ds.eval.size()) {
    throw UsageError("--sample must be below " + std::to_string(ds.eval.size()));
  }
  const auto enc = encode(model, ds.eval[sample].frames);
  const auto cfgs = model.encoder_configs();
  Json heads = Json::array();
  for (std::size_t h = 0; h < enc.att.heads.size(); ++h) {
    const auto& w = enc.att.heads[h].weights;
    std::ostringstream os;
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(w.cols()));
      for (Eigen::Index j = 0; j < w.cols(); ++j) row[static_cast<std::size_t>(j)] = w(i, j);
      os << csv_row(row) << '\n';
    }
    const std::string file = "attmap_s" + std::to_string(sample) + "_h" + std::to_string(h) + ".csv";
    atomic_write(out / file, os.str());
    const auto& st = enc.att.stats[h];
    heads.push_back({{"id", h},
                     {"kind", to_string(model.kinds[h])},
                     {"alpha", cfgs[h].alpha_value()},
                     {"zero_fraction", st.zero_fraction},
                     {"rows_with_zero", st.rows_with_zero},
                     {"mean_entropy", st.mean_entropy},
                     {"histogram", st.histogram},
                     {"file", file}});
  }
  const Json summary{{"sample", sample}, {"heads", heads}};
  atomic_write(out / ("attmap_s" + std::to_string(sample) + "_summary.json"), summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse and monotonic attention toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out", g.out, "Output directory (overrides RUN_OUT_DIR and the config)");

  auto* transform = app.add_subcommand("transform", "Print a transform of a logit vector as CSV");
  std::string kind;
  double alpha = 1.5;
  double temp = 1.0;
  std::string logits;
  transform->add_option("--kind", kind)->required()->check(CLI::IsMember({"softmax", "sparsemax", "entmax15", "entmax"}));
  transform->add_option("--alpha", alpha, "Entmax alpha (kind entmax)");
  transform->add_option("--temp", temp, "Softmax temperature");
  transform->add_option("--logits", logits, "Comma-separated logits")->required()->allow_extra_args(false);

  auto* gradcheck = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
  std::size_t trials = 100;
  std::size_t dim = 8;
  std::string report;
  gradcheck->add_option("--trials", trials)->check(CLI::PositiveNumber);
  gradcheck->add_option("--dim", dim)->check(CLI::PositiveNumber);
  gradcheck->add_option("--report", report, "Write the JSON report here");

  auto* bench = app.add_subcommand("bench", "Time a transform's forward pass");
  std::string bench_kind = "softmax";
  std::size_t bench_dim = 512;
  std::size_t batch = 1024;
  std::size_t iters = 10;
  bench->add_option("--kind", bench_kind)->check(CLI::IsMember({"softmax", "sparsemax", "entmax15", "entmax"}));
  bench->add_option("--dim", bench_dim)->check(CLI::PositiveNumber);
  bench->add_option("--batch", batch)->check(CLI::PositiveNumber);
  bench->add_option("--iters", iters)->check(CLI::PositiveNumber);

  auto* trainc = app.add_subcommand("train", "Train the toy model");
  std::string config;
  trainc->add_option("--config", config)->required();

  auto* attmap = app.add_subcommand("attmap", "Dump encoder attention maps of a trained run");
  std::size_t sample = 0;
  attmap->add_option("--config", config)->required();
  attmap->add_option("--sample", sample);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (transform->parsed()) return cmd_transform(kind, alpha, temp, logits);
    if (gradcheck->parsed()) return cmd_gradcheck(trials, dim, g.seed.value_or(1), report);
    if (bench->parsed()) return cmd_bench(bench_kind, bench_dim, batch, iters, g.seed.value_or(1));
    if (trainc->parsed()) return cmd_train(g, config);
    if (attmap->parsed()) return cmd_attmap(g, config, sample);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kUsage;
}
