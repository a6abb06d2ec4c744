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

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "weissi/attacks.hpp"
#include "weissi/regularizers.hpp"

namespace weissi {

struct AdversarialConfig {
  double delta = 0.01;  ///< train-time l-infinity radius
  AttackConfig inner = AttackConfig::pgd(0.01, 10, std::nullopt, true);
};

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 100;
  double lr = 0.1;
  double momentum = 0.9;
  /// lr is multiplied by lr_decay_factor every lr_decay_interval epochs
  /// (0 disables decay).
  std::size_t lr_decay_interval = 40;
  double lr_decay_factor = 0.1;
  RegularizerConfig reg;
  std::optional<AdversarialConfig> adversarial;
  std::uint64_t seed = 0;
  /// Whether a final batch smaller than batch_size is used.
  bool allow_partial_batch = true;

  double lr_at(std::size_t epoch) const {
    if (lr_decay_interval == 0) return lr;
    return lr * std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_interval));
  }

  void validate(const std::string& prefix = "train") {
    if (batch_size < 1) throw ConfigError(prefix + ".batch_size", "must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError(prefix + ".lr", "must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError(prefix + ".momentum", "must be in [0, 1)");
    if (!(lr_decay_factor > 0.0)) throw ConfigError(prefix + ".lr_decay_factor", "must be > 0");
    reg.validate(prefix + ".reg");
    if (adversarial) {
      if (!(adversarial->delta >= 0.0)) throw ConfigError(prefix + ".adversarial.delta", "must be >= 0");
      adversarial->inner.epsilon = adversarial->delta;
      if (adversarial->inner.kind == AttackKind::pgd && adversarial->inner.step_size <= 0.0) {
        adversarial->inner.step_size = 2.5 * adversarial->delta / static_cast<double>(adversarial->inner.steps);
      }
      adversarial->inner.validate(prefix + ".adversarial.inner");
    }
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  ///< data loss + penalty, averaged over steps
  double data_loss = 0.0;
  double reg_total = 0.0;   ///< configured penalty at epoch end
  double energy = 0.0;      ///< WEISSI weight energy at epoch end
  double complexity = 0.0;  ///< WEISSI weight complexity at epoch end
  double clean_acc = 0.0;   ///< accuracy on the (clean) training batches seen this epoch
  double test_acc = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  double sparsity = 0.0;    ///< fraction of weights with |w| < 1e-4
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  static constexpr const char* kCsvHeader =
      "epoch,train_loss,data_loss,reg_total,energy,complexity,clean_acc,test_acc,lr,sparsity";

  void write_csv(std::ostream& os) const {
    os << kCsvHeader << '\n';
    os.precision(17);
    for (const auto& e : epochs) {
      os << e.epoch << ',' << e.train_loss << ',' << e.data_loss << ',' << e.reg_total << ',' << e.energy << ','
         << e.complexity << ',' << e.clean_acc << ',';
      if (!std::isnan(e.test_acc)) os << e.test_acc;
      os << ',' << e.lr << ',' << e.sparsity << '\n';
    }
  }
};

/// Momentum buffers, one per parameter tensor in Network::params() order.
struct MomentumState {
  std::vector<std::vector<double>> velocity;
};

struct StepMetrics {
  double loss = 0.0;
  double data_loss = 0.0;
  double reg = 0.0;
  std::size_t correct = 0;
};

/// One momentum update on a batch:
///   v <- m v + grad(L_data + L_reg),  theta <- theta - lr v.
/// The penalty gradient comes from reg_grad; the data gradient from the tape.
inline StepMetrics train_step(Network& net, const Tensor& x, std::span<const int> labels, const TrainConfig& cfg,
                              MomentumState& state, double lr) {
  if (labels.empty()) throw ContractError("train_step: empty batch");
  net.zero_grad();
  Tape tape;
  const BoundParams p = bind(tape, net, true);
  Var logits = forward(net, p, tape.input(x));
  Var loss = ops::softmax_cross_entropy(logits, labels);
  tape.backward(loss);

  StepMetrics m;
  m.data_loss = loss.value().item();
  m.correct = count_correct(logits.value(), labels);
  if (cfg.reg.kind != RegKind::none) {
    m.reg = evaluate(net, cfg.reg).total;
    const auto refs = net.weight_refs();
    const auto rg = reg_grad(net, cfg.reg);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      Tensor& w = net.weight(refs[i]);
      if (!w.grad) w.grad = std::vector<double>(w.size(), 0.0);
      auto& g = *w.grad;
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += rg[i][k];
    }
  }
  m.loss = m.data_loss + m.reg;
  if (!std::isfinite(m.loss)) {
    throw NonFiniteError("train_step: non-finite loss (data " + std::to_string(m.data_loss) + ", penalty " +
                         std::to_string(m.reg) + ")");
  }

  auto params = net.params();
  if (state.velocity.size() != params.size()) {
    state.velocity.clear();
    for (Tensor* t : params) state.velocity.emplace_back(t->size(), 0.0);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = *params[i];
    auto& v = state.velocity[i];
    if (!t.grad) {
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = cfg.momentum * v[k];
        t.data[k] -= lr * v[k];
      }
      continue;
    }
    const auto& g = *t.grad;
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = cfg.momentum * v[k] + g[k];
      t.data[k] -= lr * v[k];
    }
  }
  net.zero_grad();
  return m;
}

/// Called after each epoch with the record just appended; return false to stop.
using EpochCallback = std::function<bool(const Network&, const EpochRecord&)>;

/// Shuffled minibatch training with step-decayed learning rate. With
/// cfg.adversarial set, each batch is replaced by attacked examples inside
/// the delta ball before the update (the penalty only enters the update).
inline TrainLog train(Network& net, const Dataset& ds, TrainConfig cfg, const Dataset* eval = nullptr,
                      const EpochCallback& on_epoch = {}) {
  cfg.validate();
  TrainLog log;
  MomentumState state;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    const BatchPlan plan = batches(ds, cfg.batch_size, derive_seed(cfg.seed, SeedPurpose::shuffle, epoch));
    double loss_sum = 0.0, data_sum = 0.0;
    std::size_t seen = 0, correct = 0, n_steps = 0;
    for (const auto& idx : plan) {
      if (idx.size() < cfg.batch_size && !cfg.allow_partial_batch) continue;
      Batch b = gather(ds, idx);
      if (cfg.adversarial) {
        // Clean accuracy is measured on the unperturbed batch.
        correct += count_correct(predict(net, b.x), b.labels);
        b.x = attack(net, b.x, b.labels, cfg.adversarial->inner, derive_seed(cfg.seed, SeedPurpose::attack, step));
      }
      const StepMetrics m = train_step(net, b.x, b.labels, cfg, state, lr);
      if (!cfg.adversarial) correct += m.correct;
      loss_sum += m.loss;
      data_sum += m.data_loss;
      seen += idx.size();
      ++n_steps;
      ++step;
    }
    EpochRecord r;
    r.epoch = epoch + 1;
    r.lr = lr;
    r.train_loss = n_steps ? loss_sum / static_cast<double>(n_steps) : 0.0;
    r.data_loss = n_steps ? data_sum / static_cast<double>(n_steps) : 0.0;
    r.clean_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    r.reg_total = evaluate(net, cfg.reg).total;
    try {
      const RegValue w = weissi(net, 1.0, 1.0);
      r.energy = w.energy_term;
      r.complexity = w.complexity_term;
    } catch (const DegenerateLayerError&) {
      r.energy = 0.0;
      r.complexity = std::numeric_limits<double>::quiet_NaN();
    }
    r.sparsity = weight_sparsity(net);
    if (eval) r.test_acc = accuracy(net, *eval);
    log.epochs.push_back(r);
    if (on_epoch && !on_epoch(net, r)) break;
  }
  return log;
}

/// Adversarial training; requires cfg.adversarial.
inline TrainLog adv_train(Network& net, const Dataset& ds, TrainConfig cfg, const Dataset* eval = nullptr,
                          const EpochCallback& on_epoch = {}) {
  if (!cfg.adversarial) throw ConfigError("train.adversarial", "adversarial training needs an adversarial config");
  return train(net, ds, std::move(cfg), eval, on_epoch);
}

}  // namespace weissi
