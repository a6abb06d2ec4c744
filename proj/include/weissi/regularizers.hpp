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
#include <string>
#include <string_view>
#include <vector>

#include "weissi/norms.hpp"

namespace weissi {

enum class RegKind { none, wd, lpq, weissi, weissi_log, weissi_cnn };

inline std::string_view to_string(RegKind k) {
  switch (k) {
    case RegKind::none: return "none";
    case RegKind::wd: return "wd";
    case RegKind::lpq: return "lpq";
    case RegKind::weissi: return "weissi";
    case RegKind::weissi_log: return "weissi_log";
    case RegKind::weissi_cnn: return "weissi_cnn";
  }
  return "?";
}

inline RegKind reg_kind_from_string(std::string_view s) {
  for (auto k : {RegKind::none, RegKind::wd, RegKind::lpq, RegKind::weissi, RegKind::weissi_log,
                 RegKind::weissi_cnn})
    if (to_string(k) == s) return k;
  throw ConfigError("reg.kind", "unknown regularizer '" + std::string(s) + "'");
}

/// Which penalty to add to the data loss and with what coefficients.
/// `lambda_wd` weighs both wd and lpq.
struct RegularizerConfig {
  RegKind kind = RegKind::none;
  double lambda_wd = 0.0;
  double lambda_e = 0.0;
  double lambda_c = 0.0;
  double p = 2.0;
  double q = 2.0;

  static RegularizerConfig weight_decay(double lambda) {
    RegularizerConfig c;
    c.kind = RegKind::wd;
    c.lambda_wd = lambda;
    return c;
  }
  static RegularizerConfig weissi(double lambda_e, double lambda_c,
                                  RegKind kind = RegKind::weissi) {
    RegularizerConfig c;
    c.kind = kind;
    c.lambda_e = lambda_e;
    c.lambda_c = lambda_c;
    return c;
  }
  static RegularizerConfig lpq_family(double lambda, double p, double q) {
    RegularizerConfig c;
    c.kind = RegKind::lpq;
    c.lambda_wd = lambda;
    c.p = p;
    c.q = q;
    return c;
  }

  bool is_weissi() const {
    return kind == RegKind::weissi || kind == RegKind::weissi_log || kind == RegKind::weissi_cnn;
  }

  void validate(const std::string& prefix = "reg") const {
    auto nonneg = [&](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(prefix + "." + name, "must be a finite value >= 0");
    };
    nonneg(lambda_wd, "lambda_wd");
    nonneg(lambda_e, "lambda_e");
    nonneg(lambda_c, "lambda_c");
    if (kind == RegKind::lpq) {
      if (p < 1.0) throw ConfigError(prefix + ".p", "must be >= 1");
      if (q < 1.0) throw ConfigError(prefix + ".q", "must be >= 1");
    }
  }
};

/// Value of a regularizer. For the WEISSI kinds
/// total = lambda_e * energy_term + lambda_c * complexity_term; for wd and
/// lpq the unweighted penalty is reported as energy_term.
struct RegValue {
  double total = 0.0;
  double energy_term = 0.0;
  double complexity_term = 0.0;
};

// Plain penalties --------------------------------------------------------------

/// Sum of squared Frobenius norms of all weight matrices and kernels.
inline double wd(const Network& net) {
  double s = 0.0;
  for (const Tensor* w : net.weights()) s += sum_squares(w->data);
  return s;
}

/// sum_l ||W_l||_{p,q}^q.
inline double lpq_family(const Network& net, double p, double q) {
  double s = 0.0;
  for (const auto& r : net.weight_refs()) s += lpq_norm_pow_q(net.weight(r), r.kind, p, q);
  return s;
}

namespace reg_detail {

inline std::vector<double> checked_norms_sq(const Network& net, const char* who) {
  std::vector<double> out;
  for (const auto& r : net.weight_refs()) {
    const double n = sum_squares(net.weight(r).data);
    if (!(n > 0.0)) {
      throw DegenerateLayerError(std::string(who) + ": layer " + std::to_string(r.layer) + " (" +
                                 std::string(r.role) + ") has zero norm");
    }
    out.push_back(n);
  }
  return out;
}

/// sum_l ||W_l / ||W_l||_F||_1.
inline double complexity(const Network& net, const std::vector<double>& norms_sq) {
  double c = 0.0;
  const auto ws = net.weights();
  for (std::size_t i = 0; i < ws.size(); ++i) c += l1_norm(*ws[i]) / std::sqrt(norms_sq[i]);
  return c;
}

inline std::size_t cnn_dense_index(const Network& net) {
  const auto refs = net.weight_refs();
  if (refs.empty() || refs.back().kind != LayerKind::dense) {
    throw ContractError("weissi_cnn: network has no dense head");
  }
  for (std::size_t i = 0; i + 1 < refs.size(); ++i) {
    if (refs[i].kind != LayerKind::conv2d) {
      throw ContractError("weissi_cnn: every weight factor before the dense head must be a conv kernel");
    }
  }
  return refs.size() - 1;
}

}  // namespace reg_detail

// WEISSI family -----------------------------------------------------------------

/// energy = prod_l ||W_l||_F^2, complexity = sum_l ||W_l / ||W_l||_F||_1.
inline RegValue weissi(const Network& net, double lambda_e, double lambda_c) {
  const auto ns = reg_detail::checked_norms_sq(net, "weissi");
  RegValue v;
  v.energy_term = 1.0;
  for (double n : ns) v.energy_term *= n;
  v.complexity_term = reg_detail::complexity(net, ns);
  v.total = lambda_e * v.energy_term + lambda_c * v.complexity_term;
  return v;
}

/// As weissi with energy = sum_l log ||W_l||_F^2.
inline RegValue weissi_log(const Network& net, double lambda_e, double lambda_c) {
  const auto ns = reg_detail::checked_norms_sq(net, "weissi_log");
  RegValue v;
  for (double n : ns) v.energy_term += std::log(n);
  v.complexity_term = reg_detail::complexity(net, ns);
  v.total = lambda_e * v.energy_term + lambda_c * v.complexity_term;
  return v;
}

/// Conv kernels enter squared, the dense head unsquared:
/// energy = (prod_conv ||W_l||_F^2) * ||W_head||_F.
inline RegValue weissi_cnn(const Network& net, double lambda_e, double lambda_c) {
  const std::size_t head = reg_detail::cnn_dense_index(net);
  const auto ns = reg_detail::checked_norms_sq(net, "weissi_cnn");
  RegValue v;
  v.energy_term = std::sqrt(ns[head]);
  for (std::size_t i = 0; i < head; ++i) v.energy_term *= ns[i];
  v.complexity_term = reg_detail::complexity(net, ns);
  v.total = lambda_e * v.energy_term + lambda_c * v.complexity_term;
  return v;
}

inline RegValue evaluate(const Network& net, const RegularizerConfig& cfg) {
  switch (cfg.kind) {
    case RegKind::none:
      return {};
    case RegKind::wd: {
      const double v = wd(net);
      return {cfg.lambda_wd * v, v, 0.0};
    }
    case RegKind::lpq: {
      const double v = lpq_family(net, cfg.p, cfg.q);
      return {cfg.lambda_wd * v, v, 0.0};
    }
    case RegKind::weissi:
      return weissi(net, cfg.lambda_e, cfg.lambda_c);
    case RegKind::weissi_log:
      return weissi_log(net, cfg.lambda_e, cfg.lambda_c);
    case RegKind::weissi_cnn:
      return weissi_cnn(net, cfg.lambda_e, cfg.lambda_c);
  }
  return {};
}

// Analytic gradients -------------------------------------------------------------

/// Gradient of the configured penalty (coefficients included) with respect
/// to every weight factor, in Network::weight_refs() order.
///
/// WEISSI energy: d/dW_l prod_j ||W_j||^2 = 2 W_l prod_{j != l} ||W_j||^2.
/// Complexity: d/dW ||W||_1 / ||W||_F = sign(W) / ||W||_F - ||W||_1 W / ||W||_F^3,
/// with sign(0) = 0.
inline std::vector<Tensor> reg_grad(const Network& net, const RegularizerConfig& cfg) {
  const auto refs = net.weight_refs();
  std::vector<Tensor> grads;
  grads.reserve(refs.size());
  for (const auto& r : refs) grads.emplace_back(net.weight(r).shape);
  if (cfg.kind == RegKind::none) return grads;

  if (cfg.kind == RegKind::wd) {
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const Tensor& w = net.weight(refs[i]);
      for (std::size_t k = 0; k < w.size(); ++k) grads[i][k] = 2.0 * cfg.lambda_wd * w[k];
    }
    return grads;
  }

  if (cfg.kind == RegKind::lpq) {
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const Tensor& w = net.weight(refs[i]);
      std::vector<double> row_p(weight_rows(w, refs[i].kind), 0.0);
      for_each_row_entry(w, refs[i].kind, [&](std::size_t row, double x) {
        row_p[row] += std::pow(std::abs(x), cfg.p);
      });
      std::size_t k = 0;
      // d/dw ||row||_p^q = q ||row||_p^(q - p) |w|^(p - 1) sign(w)
      for_each_row_entry(w, refs[i].kind, [&](std::size_t row, double x) {
        double g = 0.0;
        if (x != 0.0) {
          const double rn = std::pow(row_p[row], 1.0 / cfg.p);
          g = cfg.q * std::pow(rn, cfg.q - cfg.p) * std::pow(std::abs(x), cfg.p - 1.0) * sign(x);
        }
        grads[i][k++] = cfg.lambda_wd * g;
      });
    }
    return grads;
  }

  const char* who = cfg.kind == RegKind::weissi ? "weissi"
                    : cfg.kind == RegKind::weissi_log ? "weissi_log"
                                                      : "weissi_cnn";
  const auto ns = reg_detail::checked_norms_sq(net, who);
  const std::size_t n = refs.size();

  // Energy part: per-factor scalar c_l so that dE/dW_l = c_l * W_l.
  std::vector<double> coef(n, 0.0);
  if (cfg.kind == RegKind::weissi) {
    for (std::size_t l = 0; l < n; ++l) {
      double others = 1.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != l) others *= ns[j];
      coef[l] = 2.0 * others;
    }
  } else if (cfg.kind == RegKind::weissi_log) {
    for (std::size_t l = 0; l < n; ++l) coef[l] = 2.0 / ns[l];
  } else {
    const std::size_t head = reg_detail::cnn_dense_index(net);
    const double head_norm = std::sqrt(ns[head]);
    for (std::size_t l = 0; l < head; ++l) {
      double others = head_norm;
      for (std::size_t j = 0; j < head; ++j)
        if (j != l) others *= ns[j];
      coef[l] = 2.0 * others;
    }
    double conv_energy = 1.0;
    for (std::size_t j = 0; j < head; ++j) conv_energy *= ns[j];
    coef[head] = conv_energy / head_norm;
  }

  for (std::size_t l = 0; l < n; ++l) {
    const Tensor& w = net.weight(refs[l]);
    const double f = std::sqrt(ns[l]);
    const double l1 = l1_norm(w);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double energy_g = coef[l] * w[k];
      const double complexity_g = sign(w[k]) / f - l1 * w[k] / (f * f * f);
      grads[l][k] = cfg.lambda_e * energy_g + cfg.lambda_c * complexity_g;
    }
  }
  return grads;
}

/// Builds the configured penalty on a tape from weight handles given in
/// Network::weight_refs() order. Differentiating it is an independent
/// route to reg_grad.
inline Var reg_expression(Tape& tape, const std::vector<Var>& weights,
                          const std::vector<LayerKind>& kinds, const RegularizerConfig& cfg) {
  if (weights.empty()) throw ContractError("reg_expression: no weights");
  auto sq_norm = [](Var w) { return ops::sum(ops::square(w)); };
  switch (cfg.kind) {
    case RegKind::none:
      return tape.constant(Tensor::scalar(0.0));
    case RegKind::wd: {
      Var s = sq_norm(weights[0]);
      for (std::size_t i = 1; i < weights.size(); ++i) s = ops::add(s, sq_norm(weights[i]));
      return ops::scale(s, cfg.lambda_wd);
    }
    case RegKind::lpq:
      if (cfg.p != cfg.q) throw ContractError("reg_expression: lpq on the tape supports p == q only");
      {
        auto term = [&](Var w) {
          // ||W||_{p,p}^p = sum |w|^p = sum exp(p log|w|); entries must be nonzero.
          return ops::sum(ops::exp(ops::scale(ops::log(ops::abs(w)), cfg.p)));
        };
        Var s = term(weights[0]);
        for (std::size_t i = 1; i < weights.size(); ++i) s = ops::add(s, term(weights[i]));
        return ops::scale(s, cfg.lambda_wd);
      }
    default:
      break;
  }
  std::vector<Var> norms_sq;
  for (Var w : weights) norms_sq.push_back(sq_norm(w));
  Var complexity = ops::div(ops::sum(ops::abs(weights[0])), ops::sqrt(norms_sq[0]));
  for (std::size_t i = 1; i < weights.size(); ++i)
    complexity = ops::add(complexity, ops::div(ops::sum(ops::abs(weights[i])), ops::sqrt(norms_sq[i])));

  Var energy = norms_sq[0];
  if (cfg.kind == RegKind::weissi) {
    for (std::size_t i = 1; i < norms_sq.size(); ++i) energy = ops::mul(energy, norms_sq[i]);
  } else if (cfg.kind == RegKind::weissi_log) {
    energy = ops::log(norms_sq[0]);
    for (std::size_t i = 1; i < norms_sq.size(); ++i) energy = ops::add(energy, ops::log(norms_sq[i]));
  } else {
    if (kinds.size() != weights.size() || kinds.back() != LayerKind::dense) {
      throw ContractError("weissi_cnn: network has no dense head");
    }
    const std::size_t head = weights.size() - 1;
    energy = ops::sqrt(norms_sq[head]);
    for (std::size_t i = 0; i < head; ++i) energy = ops::mul(energy, norms_sq[i]);
  }
  return ops::add(ops::scale(energy, cfg.lambda_e), ops::scale(complexity, cfg.lambda_c));
}

/// Fraction of weight entries with |w| below the threshold.
inline double weight_sparsity(const Network& net, double threshold = 1e-4) {
  std::size_t small = 0, total = 0;
  for (const Tensor* w : net.weights()) {
    for (double x : w->data) small += std::abs(x) < threshold;
    total += w->size();
  }
  return total ? static_cast<double>(small) / static_cast<double>(total) : 0.0;
}

}  // namespace weissi
