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
 * Run configuration and artifact files.
 *
 * A run config is a JSON object:
 *
 *   {"seed": 1, "out_dir": "runs/a", "task": {...}, "trainer": {...}}
 *
 * `seed` is required and seeds both the task and the trainer. Every other
 * key is optional; unknown keys are errors at every level.
 */

#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "entmono/toy_train.hpp"
#include "json.hpp"

namespace entmono {

using Json = nlohmann::json;

/// Malformed or inconsistent run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<std::string> out_dir;
  SyntheticTask task;
  TrainerConfig trainer;

  void set_seed(std::uint64_t s) {
    seed = s;
    task.seed = s;
    trainer.seed = s;
  }
};

namespace detail {

inline void reject_unknown(const Json& obj, const std::vector<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_key(const Json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig cfg;
  try {
    detail::reject_unknown(doc, {"seed", "out_dir", "task", "trainer"}, "run config");
    if (!doc.contains("seed")) throw ConfigError("missing required key 'seed'");
    cfg.set_seed(doc.at("seed").get<std::uint64_t>());
    if (doc.contains("out_dir")) cfg.out_dir = doc.at("out_dir").get<std::string>();
    if (doc.contains("task")) {
      const auto& t = doc.at("task");
      if (!t.is_object()) throw ConfigError("'task' must be an object");
      detail::reject_unknown(t, {"vocab_size", "output_length", "upsample", "samples", "eval_samples", "noise"},
                             "task");
      detail::read_key(t, "vocab_size", cfg.task.vocab_size);
      detail::read_key(t, "output_length", cfg.task.output_length);
      detail::read_key(t, "upsample", cfg.task.upsample);
      detail::read_key(t, "samples", cfg.task.samples);
      detail::read_key(t, "eval_samples", cfg.task.eval_samples);
      detail::read_key(t, "noise", cfg.task.noise);
    }
    if (doc.contains("trainer")) {
      const auto& t = doc.at("trainer");
      if (!t.is_object()) throw ConfigError("'trainer' must be an object");
      detail::reject_unknown(t,
                             {"learning_rate", "beta1", "beta2", "steps", "batch_size", "encoder_heads",
                              "temperature", "decoder_heads", "d_model", "energy_dim", "lambda", "l1_layers",
                              "energy_noise", "log_interval", "monitor_samples"},
                             "trainer");
      auto& c = cfg.trainer;
      detail::read_key(t, "learning_rate", c.learning_rate);
      detail::read_key(t, "beta1", c.beta1);
      detail::read_key(t, "beta2", c.beta2);
      detail::read_key(t, "steps", c.steps);
      detail::read_key(t, "batch_size", c.batch_size);
      if (t.contains("encoder_heads")) {
        c.encoder_heads.clear();
        for (const auto& k : t.at("encoder_heads")) {
          c.encoder_heads.push_back(normalizer_kind_from_string(k.get<std::string>()));
        }
      }
      detail::read_key(t, "temperature", c.temperature);
      detail::read_key(t, "decoder_heads", c.decoder_heads);
      detail::read_key(t, "d_model", c.d_model);
      detail::read_key(t, "energy_dim", c.energy_dim);
      detail::read_key(t, "lambda", c.lambda);
      if (t.contains("l1_layers")) c.l1_layers = t.at("l1_layers").get<std::set<std::size_t>>();
      detail::read_key(t, "energy_noise", c.energy_noise);
      detail::read_key(t, "log_interval", c.log_interval);
      detail::read_key(t, "monitor_samples", c.monitor_samples);
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  try {
    cfg.task.validate();
    cfg.trainer.validate();
    if (cfg.trainer.temperature <= 0.0) throw ConfigError("trainer.temperature must be > 0");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

/// Writes `content` to a sibling temp file, then renames it over `path`.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Fixed-point with 6 decimals.
inline std::string fmt6(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

inline std::string csv_row(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ',';
    s += fmt6(xs[i]);
  }
  return s;
}

inline std::string trace_csv(const TrainingTrace& trace) {
  std::ostringstream os;
  os << "step,loss";
  for (auto h : trace.adaptive_heads) os << ",alpha_h" << h;
  os << '\n';
  for (const auto& row : trace.rows) {
    os << row.step << ',' << fmt6(row.loss);
    for (double a : row.alpha) os << ',' << fmt6(a);
    os << '\n';
  }
  return os.str();
}

/// One row per (eval sample, output step); -1 marks an exhausted scan.
inline std::string alignment_csv(const std::vector<Sample>& samples, const EvalReport& eval) {
  std::ostringstream os;
  const std::size_t heads = eval.mean_selection_prob.size();
  os << "sample,step,token,predicted,gold";
  for (std::size_t m = 0; m < heads; ++m) os << ",head" << m;
  os << '\n';
  for (std::size_t n = 0; n < eval.decodes.size(); ++n) {
    const auto& d = eval.decodes[n];
    for (std::size_t i = 0; i < samples[n].tokens.size(); ++i) {
      os << n << ',' << i << ',' << samples[n].tokens[i] << ',' << d.tokens[i] << ',' << samples[n].gold[i];
      for (const auto& path : d.paths) {
        os << ',';
        if (path.ended(i)) {
          os << -1;
        } else {
          os << path.t[i];
        }
      }
      os << '\n';
    }
  }
  return os.str();
}

inline Json stats_json(const HeadScoreStats& s) {
  return {{"mean_entropy", s.mean_entropy},
          {"zero_fraction", s.zero_fraction},
          {"rows_with_zero", s.rows_with_zero},
          {"histogram", s.histogram}};
}

inline Json heads_json(const TrainingResult& r) {
  const auto& model = r.model;
  double alpha_sum = 0.0;
  const auto adaptive = model.adaptive_heads();
  for (auto h : adaptive) alpha_sum += AlphaParameter(model.alpha_pre(static_cast<Eigen::Index>(h))).alpha();
  const double alpha = adaptive.empty() ? 1.5 : alpha_sum / static_cast<double>(adaptive.size());
  Json heads = Json::array();
  for (std::size_t m = 0; m < r.eval.mean_selection_prob.size(); ++m) {
    heads.push_back({{"id", m},
                     {"mean_selection_prob", r.eval.mean_selection_prob[m]},
                     {"alpha", alpha},
                     {"alignment_accuracy", r.eval.head_alignment_accuracy[m]}});
  }
  Json enc = Json::array();
  for (std::size_t h = 0; h < model.kinds.size(); ++h) {
    const auto cfg = model.encoder_configs()[h];
    Json e{{"id", h}, {"kind", to_string(model.kinds[h])}, {"alpha", cfg.alpha_value()}};
    if (h < r.eval.encoder_stats.size()) e["stats"] = stats_json(r.eval.encoder_stats[h]);
    enc.push_back(e);
  }
  return {{"heads", heads},
          {"token_accuracy", r.eval.token_accuracy},
          {"alignment_accuracy", r.eval.alignment_accuracy},
          {"status", r.trace.diverged ? "diverged" : "ok"},
          {"failure", r.trace.failure},
          {"encoder_heads", enc}};
}

inline Json model_json(const ToyModel& model) {
  ToyModel copy = model;
  Json tensors = Json::object();
  for (const auto& t : copy.tensors()) tensors[t.name] = std::vector<double>(t.data, t.data + t.size);
  std::vector<std::string> kinds;
  for (auto k : model.kinds) kinds.push_back(to_string(k));
  return {{"encoder_heads", kinds},
          {"temperature", model.temperature},
          {"d_model", model.d_model()},
          {"vocab", model.vocab()},
          {"decoder_heads", model.decoder_heads()},
          {"energy_dim", model.energy.front().b.size()},
          {"tensors", tensors}};
}

inline ToyModel model_from_json(const Json& j) {
  try {
    TrainerConfig cfg;
    cfg.encoder_heads.clear();
    for (const auto& k : j.at("encoder_heads")) cfg.encoder_heads.push_back(normalizer_kind_from_string(k.get<std::string>()));
    cfg.temperature = j.at("temperature").get<double>();
    cfg.d_model = j.at("d_model").get<Eigen::Index>();
    cfg.decoder_heads = j.at("decoder_heads").get<std::size_t>();
    cfg.energy_dim = j.at("energy_dim").get<Eigen::Index>();
    Rng rng(0);
    ToyModel model = ToyModel::init(cfg, j.at("vocab").get<std::size_t>(), rng);
    const auto& tensors = j.at("tensors");
    for (const auto& t : model.tensors()) {
      const auto data = tensors.at(t.name).get<std::vector<double>>();
      if (data.size() != static_cast<std::size_t>(t.size)) {
        throw ConfigError("model tensor " + t.name + " has the wrong size");
      }
      std::copy(data.begin(), data.end(), t.data);
    }
    return model;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("model file: ") + e.what());
  }
}

}  // namespace entmono
