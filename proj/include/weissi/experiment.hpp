/*
 * Copyright 2026 The weissi Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Experiment configuration and runner.
//
// Config document (JSON). Every field is optional except where noted; missing
// fields take the preset's defaults.
//
//   {
//     "name": "mlp-weissi",
//     "preset": "mlp-mnist" | "cnn-mnist" | "residual-toy" | "custom",
//     "network": { <network sidecar> },            // custom only
//     "data": { "source": "mnist" | "blobs", "dir": "...",
//               "train_limit": 0, "test_limit": 0,  // 0 = whole split
//               "n": 2000, "test_n": 500, "d": 16, "classes": 4, "stddev": 0.1 },
//     "init": { "scheme": "he" | "fixup_like" | "constant", "constant": 0 },
//     "seeds": [0, 1, 2],
//     "train": { "epochs", "batch_size", "lr", "momentum",
//                "lr_decay": { "interval", "factor" },
//                "reg": { "kind", "lambda_wd", "lambda_e", "lambda_c", "p", "q" },
//                "adversarial": null | { "delta", "inner": <attack> },
//                "allow_partial_batch" },
//     "attack_suite": [ <attack>, ... ],
//     "checkpoint_every": 0,
//     "output_dir": "..."                          // relative to the output root
//   }
//   <attack> = { "kind": "fgsm" | "pgd", "epsilon", "steps", "step_size", "random_start" }
//
// Run directory layout (one per seed, under <output_dir>/seed_<k>):
//   manifest.json   config hash, seed, derived seeds, library version, BLAS backend
//   metrics.csv     TrainLog
//   model.wssi      final weights (+ model.wssi.json)
//   ckpt_e<N>.wssi  periodic checkpoints
//   result.json     {"seed", "config_hash", "metrics": {"clean": .., "<attack label>": ..}}
//
// summary.json (in <output_dir>):
//   { "name", "config_hash", "preset", "reg", "ablation", "seeds": [..],
//     "per_seed": [ { "seed", "clean", "<attack label>"... } ],
//     "mean": { "clean", "<attack label>"... }, "std": { ... },
//     "notes": [ .. ] }
// std is the sample standard deviation (n - 1), 0 for a single seed.

#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "weissi/blas.hpp"
#include "weissi/serialize.hpp"
#include "weissi/train.hpp"

namespace weissi {

inline constexpr const char* kVersionString = "0.1.0";

enum class Preset { mlp_mnist, cnn_mnist, residual_toy, custom };

inline std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::mlp_mnist: return "mlp-mnist";
    case Preset::cnn_mnist: return "cnn-mnist";
    case Preset::residual_toy: return "residual-toy";
    case Preset::custom: return "custom";
  }
  return "?";
}

inline Preset preset_from_string(std::string_view s) {
  for (auto p : {Preset::mlp_mnist, Preset::cnn_mnist, Preset::residual_toy, Preset::custom})
    if (to_string(p) == s) return p;
  throw ConfigError("preset", "unknown preset '" + std::string(s) + "'");
}

struct DataConfig {
  enum class Source { mnist, blobs } source = Source::mnist;
  std::string dir;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  std::size_t n = 2000;
  std::size_t test_n = 500;
  std::size_t d = 16;
  std::size_t classes = 4;
  double stddev = 0.1;
};

struct ExperimentConfig {
  std::string name;
  Preset preset = Preset::mlp_mnist;
  nlohmann::json network;  ///< sidecar document, custom preset only
  DataConfig data;
  InitConfig init;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  TrainConfig train;
  std::vector<AttackConfig> attack_suite;
  std::size_t checkpoint_every = 0;
  std::string output_dir = "run";
};

/// Default coefficients per preset: weight decay 1e-4; WEISSI energy 1e-6 and
/// complexity 1e-5.
inline RegularizerConfig preset_reg(RegKind kind) {
  RegularizerConfig r;
  r.kind = kind;
  if (kind == RegKind::wd || kind == RegKind::lpq) r.lambda_wd = 1e-4;
  if (r.is_weissi()) {
    r.lambda_e = 1e-6;
    r.lambda_c = 1e-5;
  }
  return r;
}

/// Defaults for a preset before any user overrides.
inline ExperimentConfig preset_defaults(Preset p) {
  ExperimentConfig c;
  c.preset = p;
  c.name = std::string(to_string(p));
  c.train.epochs = 60;
  c.train.batch_size = 100;
  c.train.lr = 0.1;
  c.train.momentum = 0.9;
  c.train.lr_decay_interval = 40;
  c.train.lr_decay_factor = 0.1;
  c.train.reg = preset_reg(RegKind::wd);
  c.attack_suite = {AttackConfig::fgsm(0.03), AttackConfig::pgd(0.03, 10)};
  if (p == Preset::residual_toy) {
    c.data.source = DataConfig::Source::blobs;
    c.train.epochs = 20;
    c.train.batch_size = 50;
    c.train.lr = 0.05;
    c.train.lr_decay_interval = 0;
    c.attack_suite = {AttackConfig::fgsm(0.03), AttackConfig::pgd(0.03, 10)};
  }
  if (const char* dir = std::getenv("WEISSI_MNIST_DIR")) c.data.dir = dir;
  return c;
}

// JSON ------------------------------------------------------------------------------

namespace config_detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    out = j[key].get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + "." + key, "wrong type");
  }
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "must be an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError(path.empty() ? k : path + "." + k, "unknown field");
  }
}

}  // namespace config_detail

inline nlohmann::json to_json(const AttackConfig& a) {
  return {{"kind", to_string(a.kind)}, {"epsilon", a.epsilon},         {"steps", a.steps},
          {"step_size", a.step_size},  {"random_start", a.random_start}};
}

inline AttackConfig attack_from_json(const nlohmann::json& j, const std::string& path) {
  using namespace config_detail;
  check_keys(j, {"kind", "epsilon", "steps", "step_size", "random_start"}, path);
  std::string kind = "fgsm";
  read_field(j, "kind", kind, path);
  AttackConfig a;
  try {
    a.kind = attack_kind_from_string(kind);
  } catch (const ConfigError&) {
    throw ConfigError(path + ".kind", "unknown attack '" + kind + "'");
  }
  read_field(j, "epsilon", a.epsilon, path);
  if (a.kind == AttackKind::pgd) {
    std::size_t steps = 10;
    read_field(j, "steps", steps, path);
    std::optional<double> step;
    if (j.contains("step_size") && !j["step_size"].is_null()) step = j["step_size"].get<double>();
    bool rs = false;
    read_field(j, "random_start", rs, path);
    a = AttackConfig::pgd(a.epsilon, steps, step, rs);
  } else {
    a = AttackConfig::fgsm(a.epsilon);
  }
  a.validate(path);
  return a;
}

inline nlohmann::json to_json(const RegularizerConfig& r) {
  return {{"kind", to_string(r.kind)}, {"lambda_wd", r.lambda_wd}, {"lambda_e", r.lambda_e},
          {"lambda_c", r.lambda_c},    {"p", r.p},                 {"q", r.q}};
}

inline nlohmann::json to_json(const TrainConfig& t) {
  nlohmann::json j = {{"epochs", t.epochs},
                      {"batch_size", t.batch_size},
                      {"lr", t.lr},
                      {"momentum", t.momentum},
                      {"lr_decay", {{"interval", t.lr_decay_interval}, {"factor", t.lr_decay_factor}}},
                      {"reg", to_json(t.reg)},
                      {"adversarial", nullptr},
                      {"allow_partial_batch", t.allow_partial_batch}};
  if (t.adversarial) j["adversarial"] = {{"delta", t.adversarial->delta}, {"inner", to_json(t.adversarial->inner)}};
  return j;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json data = {{"source", c.data.source == DataConfig::Source::mnist ? "mnist" : "blobs"},
                         {"train_limit", c.data.train_limit},
                         {"test_limit", c.data.test_limit}};
  if (c.data.source == DataConfig::Source::blobs) {
    data["n"] = c.data.n;
    data["test_n"] = c.data.test_n;
    data["d"] = c.data.d;
    data["classes"] = c.data.classes;
    data["stddev"] = c.data.stddev;
  }
  const char* scheme = c.init.scheme == InitScheme::he ? "he" : c.init.scheme == InitScheme::fixup_like ? "fixup_like"
                                                                                                       : "constant";
  nlohmann::json j = {{"name", c.name},
                      {"preset", to_string(c.preset)},
                      {"data", data},
                      {"init", {{"scheme", scheme}, {"constant", c.init.constant}}},
                      {"seeds", c.seeds},
                      {"train", to_json(c.train)},
                      {"attack_suite", nlohmann::json::array()},
                      {"checkpoint_every", c.checkpoint_every},
                      {"output_dir", c.output_dir}};
  if (c.preset == Preset::custom) j["network"] = c.network;
  for (const auto& a : c.attack_suite) j["attack_suite"].push_back(to_json(a));
  return j;
}

/// Parses and validates a config document. Errors name the offending field
/// path, e.g. "train.reg.lambda_e: must be a finite value >= 0".
inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  check_keys(j, {"name", "preset", "network", "data", "init", "seeds", "train", "attack_suite", "checkpoint_every",
                 "output_dir"},
             "");
  std::string preset = "mlp-mnist";
  read_field(j, "preset", preset, "");
  ExperimentConfig c = preset_defaults(preset_from_string(preset));
  read_field(j, "name", c.name, "");
  read_field(j, "checkpoint_every", c.checkpoint_every, "");
  read_field(j, "output_dir", c.output_dir, "");
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  if (j.contains("seeds")) {
    read_field(j, "seeds", c.seeds, "");
    if (c.seeds.empty()) throw ConfigError("seeds", "need at least one seed");
  }

  if (c.preset == Preset::custom) {
    if (!j.contains("network")) throw ConfigError("network", "required for the custom preset");
    c.network = j["network"];
    try {
      (void)network_from_sidecar(c.network);
    } catch (const Error& e) {
      throw ConfigError("network", e.what());
    }
  } else if (j.contains("network")) {
    throw ConfigError("network", "only allowed with the custom preset");
  }

  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, {"source", "dir", "train_limit", "test_limit", "n", "test_n", "d", "classes", "stddev"}, "data");
    std::string src = c.data.source == DataConfig::Source::mnist ? "mnist" : "blobs";
    read_field(d, "source", src, "data");
    if (src == "mnist") c.data.source = DataConfig::Source::mnist;
    else if (src == "blobs") c.data.source = DataConfig::Source::blobs;
    else throw ConfigError("data.source", "must be 'mnist' or 'blobs'");
    read_field(d, "dir", c.data.dir, "data");
    read_field(d, "train_limit", c.data.train_limit, "data");
    read_field(d, "test_limit", c.data.test_limit, "data");
    read_field(d, "n", c.data.n, "data");
    read_field(d, "test_n", c.data.test_n, "data");
    read_field(d, "d", c.data.d, "data");
    read_field(d, "classes", c.data.classes, "data");
    read_field(d, "stddev", c.data.stddev, "data");
    if (c.data.n < 1) throw ConfigError("data.n", "must be >= 1");
    if (c.data.d < 1) throw ConfigError("data.d", "must be >= 1");
    if (c.data.classes < 1) throw ConfigError("data.classes", "must be >= 1");
  }
  if ((c.preset == Preset::mlp_mnist || c.preset == Preset::cnn_mnist) && c.data.source != DataConfig::Source::mnist) {
    throw ConfigError("data.source", "MNIST presets need MNIST data");
  }

  if (j.contains("init")) {
    const auto& in = j["init"];
    check_keys(in, {"scheme", "constant"}, "init");
    std::string s = "he";
    read_field(in, "scheme", s, "init");
    if (s == "he") c.init.scheme = InitScheme::he;
    else if (s == "fixup_like") c.init.scheme = InitScheme::fixup_like;
    else if (s == "constant") c.init.scheme = InitScheme::constant;
    else throw ConfigError("init.scheme", "unknown scheme '" + s + "'");
    read_field(in, "constant", c.init.constant, "init");
  }

  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, {"epochs", "batch_size", "lr", "momentum", "lr_decay", "reg", "adversarial", "allow_partial_batch"},
               "train");
    read_field(t, "epochs", c.train.epochs, "train");
    read_field(t, "batch_size", c.train.batch_size, "train");
    read_field(t, "lr", c.train.lr, "train");
    read_field(t, "momentum", c.train.momentum, "train");
    read_field(t, "allow_partial_batch", c.train.allow_partial_batch, "train");
    if (t.contains("lr_decay") && !t["lr_decay"].is_null()) {
      check_keys(t["lr_decay"], {"interval", "factor"}, "train.lr_decay");
      read_field(t["lr_decay"], "interval", c.train.lr_decay_interval, "train.lr_decay");
      read_field(t["lr_decay"], "factor", c.train.lr_decay_factor, "train.lr_decay");
    }
    if (t.contains("reg")) {
      const auto& r = t["reg"];
      check_keys(r, {"kind", "lambda_wd", "lambda_e", "lambda_c", "p", "q"}, "train.reg");
      std::string kind = std::string(to_string(c.train.reg.kind));
      read_field(r, "kind", kind, "train.reg");
      try {
        c.train.reg = preset_reg(reg_kind_from_string(kind));
      } catch (const ConfigError&) {
        throw ConfigError("train.reg.kind", "unknown regularizer '" + kind + "'");
      }
      read_field(r, "lambda_wd", c.train.reg.lambda_wd, "train.reg");
      read_field(r, "lambda_e", c.train.reg.lambda_e, "train.reg");
      read_field(r, "lambda_c", c.train.reg.lambda_c, "train.reg");
      read_field(r, "p", c.train.reg.p, "train.reg");
      read_field(r, "q", c.train.reg.q, "train.reg");
    }
    if (t.contains("adversarial") && !t["adversarial"].is_null()) {
      const auto& a = t["adversarial"];
      check_keys(a, {"delta", "inner"}, "train.adversarial");
      AdversarialConfig adv;
      read_field(a, "delta", adv.delta, "train.adversarial");
      if (a.contains("inner")) {
        nlohmann::json inner = a["inner"];
        if (!inner.contains("epsilon")) inner["epsilon"] = adv.delta;
        adv.inner = attack_from_json(inner, "train.adversarial.inner");
      } else {
        adv.inner = AttackConfig::pgd(adv.delta, 10, std::nullopt, true);
      }
      c.train.adversarial = adv;
    }
  }
  c.train.validate("train");

  if (j.contains("attack_suite")) {
    if (!j["attack_suite"].is_array()) throw ConfigError("attack_suite", "must be an array");
    c.attack_suite.clear();
    for (std::size_t i = 0; i < j["attack_suite"].size(); ++i)
      c.attack_suite.push_back(attack_from_json(j["attack_suite"][i], "attack_suite[" + std::to_string(i) + "]"));
  }
  return c;
}

/// FNV-1a over the canonical (sorted-key) dump of the config, as 16 hex digits.
/// The output directory is excluded so relocated runs keep their hash.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("output_dir");
  j.erase("name");
  j.erase("seeds");
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// "energy-only" / "complexity-only" for WEISSI ablations, else the kind name.
inline std::string reg_label(const RegularizerConfig& r) {
  if (r.is_weissi()) {
    if (r.lambda_e == 0.0 && r.lambda_c > 0.0) return std::string(to_string(r.kind)) + ":complexity-only";
    if (r.lambda_c == 0.0 && r.lambda_e > 0.0) return std::string(to_string(r.kind)) + ":energy-only";
  }
  return std::string(to_string(r.kind));
}

/// Output root: $WEISSI_OUTPUT_ROOT, else the current directory.
inline std::filesystem::path output_root() {
  if (const char* r = std::getenv("WEISSI_OUTPUT_ROOT"); r && *r) return r;
  return std::filesystem::current_path();
}

// Running -----------------------------------------------------------------------------

struct ExperimentData {
  Dataset train;
  Dataset test;
};

inline ExperimentData load_experiment_data(const ExperimentConfig& c) {
  ExperimentData d;
  if (c.data.source == DataConfig::Source::mnist) {
    if (c.data.dir.empty()) throw ConfigError("data.dir", "no MNIST directory (set data.dir or WEISSI_MNIST_DIR)");
    d.train = load_mnist_dir(c.data.dir, Split::train);
    d.test = load_mnist_dir(c.data.dir, Split::test);
  } else {
    // One draw so train and test share class means.
    Dataset all = synthetic_blobs(c.data.n + c.data.test_n, c.data.d, c.data.classes, 0x5eed, c.data.stddev);
    d.train = head(all, c.data.n);
    d.test.num_classes = all.num_classes;
    d.test.split = Split::test;
    const std::size_t dim = all.example_size();
    d.test.images = Tensor(Shape{c.data.test_n, dim},
                           std::vector<double>(all.images.data.begin() + c.data.n * dim, all.images.data.end()));
    d.test.labels.assign(all.labels.begin() + c.data.n, all.labels.end());
  }
  if (c.data.train_limit) d.train = head(d.train, c.data.train_limit);
  if (c.data.test_limit) d.test = head(d.test, c.data.test_limit);
  if (c.preset == Preset::cnn_mnist) {
    d.train = as_images(std::move(d.train), 1, 28, 28);
    d.test = as_images(std::move(d.test), 1, 28, 28);
  }
  return d;
}

inline Network build_network(const ExperimentConfig& c) {
  switch (c.preset) {
    case Preset::mlp_mnist: return mlp_mnist();
    case Preset::cnn_mnist: return cnn_mnist();
    case Preset::residual_toy:
      return residual_chain(c.data.d, 32, 32, 4, c.data.classes, Aggregation::convex, false, true);
    case Preset::custom: return network_from_sidecar(c.network);
  }
  throw ConfigError("preset", "unhandled preset");
}

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> metrics;  ///< "clean" first, then attack labels
  bool reused = false;
};

struct ExperimentOptions {
  std::size_t threads = 1;
  bool reuse = true;  ///< skip seeds whose result.json matches the config hash
  std::ostream* progress = nullptr;
};

/// Trains and evaluates one seed in `dir`.
inline SeedResult run_seed(const ExperimentConfig& c, const ExperimentData& data, std::uint64_t seed,
                           const std::filesystem::path& dir, const ExperimentOptions& opt, std::mutex& log_mu) {
  namespace fs = std::filesystem;
  const std::string hash = config_hash(c);
  fs::create_directories(dir);
  if (opt.reuse && fs::exists(dir / "result.json")) {
    std::ifstream f(dir / "result.json");
    const auto r = nlohmann::json::parse(f, nullptr, false);
    if (!r.is_discarded() && r.value("config_hash", "") == hash && r.value("seed", ~0ULL) == seed) {
      SeedResult sr;
      sr.seed = seed;
      sr.reused = true;
      sr.metrics.emplace_back("clean", r["metrics"].at("clean").get<double>());
      for (const auto& a : c.attack_suite) sr.metrics.emplace_back(a.label(), r["metrics"].at(a.label()).get<double>());
      return sr;
    }
  }

  const std::uint64_t init_seed = derive_seed(seed, SeedPurpose::init, 0);
  nlohmann::json manifest = {{"config_hash", hash},
                             {"seed", seed},
                             {"derived_seeds", {{"init", init_seed}, {"train_root", seed}}},
                             {"version", kVersionString},
                             {"blas_backend", blas::backend_name()},
                             {"compiler", __VERSION__},
                             {"config", to_json(c)}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';

  Network net = build_network(c);
  init(net, c.init, init_seed);
  TrainConfig tc = c.train;
  tc.seed = seed;
  const auto on_epoch = [&](const Network& n, const EpochRecord& r) {
    if (c.checkpoint_every && r.epoch % c.checkpoint_every == 0)
      save_network(n, (dir / ("ckpt_e" + std::to_string(r.epoch) + ".wssi")).string());
    if (opt.progress) {
      std::lock_guard lk(log_mu);
      *opt.progress << "[seed " << seed << "] epoch " << r.epoch << " loss " << r.train_loss << " train_acc "
                    << r.clean_acc << " energy " << r.energy << " complexity " << r.complexity << std::endl;
    }
    return true;
  };
  const TrainLog log = train(net, data.train, tc, nullptr, on_epoch);
  {
    std::ofstream csv(dir / "metrics.csv");
    log.write_csv(csv);
  }
  save_network(net, (dir / "model.wssi").string());

  SeedResult sr;
  sr.seed = seed;
  sr.metrics.emplace_back("clean", accuracy(net, data.test));
  for (const auto& a : c.attack_suite)
    sr.metrics.emplace_back(a.label(), evaluate_robustness(net, data.test, a, derive_seed(seed, SeedPurpose::attack, 1u << 20)));
  nlohmann::json r = {{"seed", seed}, {"config_hash", hash}, {"metrics", nlohmann::json::object()}};
  for (const auto& [k, v] : sr.metrics) r["metrics"][k] = v;
  std::ofstream(dir / "result.json") << r.dump(2) << '\n';
  return sr;
}

struct ExperimentSummary {
  nlohmann::json json;
  std::filesystem::path dir;
};

/// Runs every seed (in parallel when opt.threads > 1, each seed owning its
/// run directory) and writes summary.json.
inline ExperimentSummary run_experiment(const ExperimentConfig& c, const ExperimentOptions& opt = {}) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(c.output_dir).is_absolute() ? fs::path(c.output_dir) : output_root() / c.output_dir;
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << to_json(c).dump(2) << '\n';
  const ExperimentData data = load_experiment_data(c);

  std::vector<SeedResult> results(c.seeds.size());
  std::mutex log_mu;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(c.seeds.size());
  auto worker = [&] {
    for (std::size_t i; (i = next++) < c.seeds.size();) {
      try {
        results[i] = run_seed(c, data, c.seeds[i], dir / ("seed_" + std::to_string(c.seeds[i])), opt, log_mu);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(opt.threads, c.seeds.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  nlohmann::json s;
  s["name"] = c.name;
  s["config_hash"] = config_hash(c);
  s["preset"] = to_string(c.preset);
  s["reg"] = to_json(c.train.reg);
  s["ablation"] = reg_label(c.train.reg);
  s["adversarial_delta"] = c.train.adversarial ? nlohmann::json(c.train.adversarial->delta) : nlohmann::json(nullptr);
  s["seeds"] = c.seeds;
  s["per_seed"] = nlohmann::json::array();
  s["mean"] = nlohmann::json::object();
  s["std"] = nlohmann::json::object();
  for (const auto& r : results) {
    nlohmann::json row = {{"seed", r.seed}};
    for (const auto& [k, v] : r.metrics) row[k] = v;
    s["per_seed"].push_back(row);
  }
  if (!results.empty()) {
    for (std::size_t m = 0; m < results[0].metrics.size(); ++m) {
      const std::string& key = results[0].metrics[m].first;
      double mean = 0.0;
      for (const auto& r : results) mean += r.metrics[m].second;
      mean /= static_cast<double>(results.size());
      double var = 0.0;
      for (const auto& r : results) var += (r.metrics[m].second - mean) * (r.metrics[m].second - mean);
      s["mean"][key] = mean;
      s["std"][key] = results.size() > 1 ? std::sqrt(var / static_cast<double>(results.size() - 1)) : 0.0;
    }
  }
  s["notes"] = {"accuracies are fractions in [0, 1] on the test split"};
  if (c.seeds.size() < 5) s["notes"].push_back("seed count " + std::to_string(c.seeds.size()) + " (reference protocol uses 5)");
  std::ofstream(dir / "summary.json") << s.dump(2) << '\n';
  return {s, dir};
}

}  // namespace weissi
