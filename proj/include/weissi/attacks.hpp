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
#include <string>
#include <string_view>

#include "weissi/data.hpp"
#include "weissi/network.hpp"

namespace weissi {

enum class AttackKind { fgsm, pgd };

inline std::string_view to_string(AttackKind k) { return k == AttackKind::fgsm ? "fgsm" : "pgd"; }

inline AttackKind attack_kind_from_string(std::string_view s) {
  if (s == "fgsm") return AttackKind::fgsm;
  if (s == "pgd") return AttackKind::pgd;
  throw ConfigError("attack.kind", "unknown attack '" + std::string(s) + "'");
}

/// l-infinity attack settings. Pixel units on the [0, 1] scale.
struct AttackConfig {
  AttackKind kind = AttackKind::fgsm;
  double epsilon = 0.0;
  std::size_t steps = 1;
  double step_size = 0.0;
  bool random_start = false;
  double clip_lo = 0.0;
  double clip_hi = 1.0;

  static AttackConfig fgsm(double eps) {
    AttackConfig c;
    c.kind = AttackKind::fgsm;
    c.epsilon = eps;
    c.steps = 1;
    c.step_size = eps;
    return c;
  }
  /// Step size defaults to 2.5 * eps / steps.
  static AttackConfig pgd(double eps, std::size_t steps = 10, std::optional<double> step_size = std::nullopt,
                          bool random_start = false) {
    AttackConfig c;
    c.kind = AttackKind::pgd;
    c.epsilon = eps;
    c.steps = steps;
    c.step_size = step_size.value_or(2.5 * eps / static_cast<double>(std::max<std::size_t>(steps, 1)));
    c.random_start = random_start;
    return c;
  }

  /// FGSM is normalized to one step of size epsilon without a random start.
  void validate(const std::string& prefix = "attack") {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError(prefix + ".epsilon", "must be >= 0");
    if (kind == AttackKind::fgsm) {
      steps = 1;
      step_size = epsilon;
      random_start = false;
      return;
    }
    if (steps < 1) throw ConfigError(prefix + ".steps", "must be >= 1");
    if (!(step_size > 0.0) && epsilon > 0.0) throw ConfigError(prefix + ".step_size", "must be > 0 for pgd");
  }

  std::string label() const {
    std::string e = std::to_string(epsilon);
    e.erase(e.find_last_not_of('0') + 1);
    if (!e.empty() && e.back() == '.') e.pop_back();
    if (kind == AttackKind::fgsm) return "fgsm@" + e;
    return "pgd" + std::to_string(steps) + "@" + e;
  }
};

struct LossAndGrad {
  double loss = 0.0;  ///< mean cross-entropy over the batch
  Tensor grad;        ///< d(sum of per-example losses)/dx, i.e. per-example gradients
  Tensor logits;
};

/// Cross-entropy input gradient of a batch. Parameters are read-only, so no
/// weight gradients are computed.
inline LossAndGrad input_gradient_ce(const Network& net, const Tensor& x, std::span<const int> labels) {
  Tape tape;
  const BoundParams p = bind(tape, net);
  Var xv = tape.input(x, true);
  Var logits = forward(net, p, xv);
  Var loss = ops::softmax_cross_entropy(logits, labels);
  Var total = ops::scale(loss, static_cast<double>(labels.size()));
  tape.backward(total);
  LossAndGrad r;
  r.loss = loss.value().item();
  r.logits = logits.value();
  auto g = tape.grad(xv);
  r.grad = g ? std::move(*g) : Tensor(x.shape);
  return r;
}

namespace attack_detail {

inline void clip(Tensor& x, double lo, double hi) {
  for (double& v : x.data) v = std::clamp(v, lo, hi);
}

}  // namespace attack_detail

/// x_adv = clip(x + eps * sign(grad_x CE), 0, 1), with sign(0) = 0.
inline Tensor fgsm(const Network& net, const Tensor& x, std::span<const int> labels, double eps,
                   double clip_lo = 0.0, double clip_hi = 1.0) {
  const auto lg = input_gradient_ce(net, x, labels);
  Tensor adv = x;
  for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += eps * sign(lg.grad[i]);
  attack_detail::clip(adv, clip_lo, clip_hi);
  return adv;
}

/// Called after each PGD step with (step index, iterate).
using PgdObserver = std::function<void(std::size_t, const Tensor&)>;

/// Projected sign-gradient ascent: x_{t+1} = P(x_t + step * sign(grad)),
/// where P clamps coordinatewise to [x - eps, x + eps] and then to [0, 1].
/// The projection contract is checked after every step.
inline Tensor pgd(const Network& net, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
                  std::uint64_t seed, const PgdObserver& observer = {}) {
  Tensor adv = x;
  if (cfg.random_start && cfg.epsilon > 0.0) {
    Rng rng(seed);
    std::uniform_real_distribution<double> d(-cfg.epsilon, cfg.epsilon);
    for (double& v : adv.data) v += d(rng);
    attack_detail::clip(adv, cfg.clip_lo, cfg.clip_hi);
  }
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const auto lg = input_gradient_ce(net, adv, labels);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      double v = adv[i] + cfg.step_size * sign(lg.grad[i]);
      v = std::clamp(v, x[i] - cfg.epsilon, x[i] + cfg.epsilon);
      adv[i] = std::clamp(v, cfg.clip_lo, cfg.clip_hi);
      if (std::abs(adv[i] - x[i]) > cfg.epsilon + 1e-12) {
        throw Error("pgd: iterate left the epsilon ball");
      }
    }
    if (observer) observer(t, adv);
  }
  return adv;
}

inline Tensor attack(const Network& net, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg,
                     std::uint64_t seed = 0) {
  if (cfg.kind == AttackKind::fgsm) return fgsm(net, x, labels, cfg.epsilon, cfg.clip_lo, cfg.clip_hi);
  return pgd(net, x, labels, cfg, seed);
}

inline std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t p = logits.shape.back();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double* row = logits.data.data() + r * p;
    const std::size_t pred = static_cast<std::size_t>(std::max_element(row, row + p) - row);
    correct += static_cast<int>(pred) == labels[r];
  }
  return correct;
}

inline double accuracy(const Network& net, const Dataset& ds, std::size_t batch_size = 500) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < ds.size(); s += batch_size) {
    const Batch b = slice(ds, s, batch_size);
    correct += count_correct(predict(net, b.x), b.labels);
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Fraction of examples still classified correctly after the attack. The
/// attack seed for each batch is derived from `seed` and the batch index.
inline double evaluate_robustness(const Network& net, const Dataset& ds, const AttackConfig& cfg,
                                  std::uint64_t seed = 0, std::size_t batch_size = 500) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  std::size_t bi = 0;
  for (std::size_t s = 0; s < ds.size(); s += batch_size, ++bi) {
    const Batch b = slice(ds, s, batch_size);
    const Tensor adv = attack(net, b.x, b.labels, cfg, derive_seed(seed, SeedPurpose::attack, bi));
    correct += count_correct(predict(net, adv), b.labels);
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace weissi
