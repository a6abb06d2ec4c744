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
#include <numeric>
#include <string>
#include <vector>

#include "weissi/norms.hpp"

namespace weissi {

/// Positive per-layer factors whose product is one.
///
/// Multiplying layer l's weights by gamma_l leaves the function of a
/// positively homogeneous network unchanged once biases follow the
/// cumulative product of the factors before them.
class ScaleShift {
 public:
  static constexpr double kProductTolerance = 1e-12;

  explicit ScaleShift(std::vector<double> gammas) : gammas_(std::move(gammas)) {
    if (gammas_.empty()) throw ContractError("scale shift: no factors");
    double prod = 1.0;
    for (std::size_t i = 0; i < gammas_.size(); ++i) {
      if (!(gammas_[i] > 0.0) || !std::isfinite(gammas_[i])) {
        throw ContractError("scale shift: factor " + std::to_string(i) + " is not a positive finite number");
      }
      prod *= gammas_[i];
    }
    if (std::abs(prod - 1.0) > kProductTolerance) {
      throw ProductConstraintError("scale shift: product of factors is " + std::to_string(prod) +
                                   ", must be 1");
    }
  }

  static ScaleShift identity(std::size_t n) { return ScaleShift(std::vector<double>(n, 1.0)); }

  /// Log-uniform factors in [exp(-spread), exp(spread)] (before centering),
  /// centered so the logs sum to zero.
  static ScaleShift random(std::size_t n, Rng& rng, double spread = 1.0) {
    std::uniform_real_distribution<double> d(-spread, spread);
    std::vector<double> logs(n);
    for (double& x : logs) x = d(rng);
    const double mean = std::accumulate(logs.begin(), logs.end(), 0.0) / static_cast<double>(n);
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = std::exp(logs[i] - mean);
    return ScaleShift(std::move(g));
  }

  const std::vector<double>& gammas() const noexcept { return gammas_; }
  std::size_t size() const noexcept { return gammas_.size(); }
  double operator[](std::size_t i) const { return gammas_[i]; }

 private:
  std::vector<double> gammas_;
};

/// Returns the equivalent network with W_l scaled by gamma_l and each bias
/// scaled by the product of all factors up to and including its layer.
/// Residual blocks scale W1 and W2 and carry gamma1 * gamma2 on their
/// shortcut multiplier.
inline Network apply_shift(const Network& net, const ScaleShift& s) {
  const auto refs = net.shift_refs();
  if (refs.size() != s.size()) {
    throw ContractError("apply_shift: network has " + std::to_string(refs.size()) +
                        " shiftable weight factors, shift has " + std::to_string(s.size()));
  }
  Network out = net;
  std::size_t next = 0;
  double cum = 1.0;
  auto scale_inplace = [](Tensor& t, double a) {
    for (double& x : t.data) x *= a;
  };
  for (auto& l : out.layers()) {
    const LayerSpec& spec = l.spec;
    if (!spec.positively_homogeneous()) {
      throw NonHomogeneousError("apply_shift: layer '" + std::string(to_string(spec.kind)) +
                                "' is not positively homogeneous");
    }
    switch (spec.kind) {
      case LayerKind::dense:
      case LayerKind::conv2d: {
        const double g = s[next++];
        scale_inplace(l.weight, g);
        cum *= g;
        if (spec.has_bias) scale_inplace(l.bias, cum);
        break;
      }
      case LayerKind::residual_block: {
        const double g1 = s[next++];
        const double g2 = s[next++];
        scale_inplace(l.w1, g1);
        scale_inplace(l.w2, g2);
        if (spec.has_bias) {
          scale_inplace(l.b1, cum * g1);
          scale_inplace(l.b2, cum * g1 * g2);
        }
        l.shortcut_scale *= g1 * g2;
        cum *= g1 * g2;
        break;
      }
      default:
        break;
    }
    for (Tensor* t : l.params()) t->grad.reset();
  }
  return out;
}

// Closed-form minimizers -------------------------------------------------------

struct MinimizedPenalty {
  double value;                 ///< minimum of the penalty over all valid shifts
  std::vector<double> gammas;   ///< minimizing factors
};

/// Minimum of sum_l g(gamma_l W_l) over shifts, for a per-layer penalty with
/// g(gamma W) = gamma^p g(W). Equals (L+1) * geomean(g(W_l)) for every p > 0;
/// the minimizing factors are (geomean / g(W_l))^(1/p).
inline MinimizedPenalty minimized_family(const std::vector<double>& g_values, double p) {
  if (g_values.empty()) throw ContractError("minimized_family: no layers");
  if (!(p > 0.0)) throw ContractError("minimized_family: exponent must be positive");
  double log_sum = 0.0;
  for (std::size_t i = 0; i < g_values.size(); ++i) {
    if (!(g_values[i] > 0.0)) {
      throw DegenerateLayerError("minimized_family: layer " + std::to_string(i) +
                                 " has non-positive penalty");
    }
    log_sum += std::log(g_values[i]);
  }
  const double n = static_cast<double>(g_values.size());
  const double log_geo = log_sum / n;
  MinimizedPenalty r{n * std::exp(log_geo), {}};
  r.gammas.reserve(g_values.size());
  for (double g : g_values) r.gammas.push_back(std::exp((log_geo - std::log(g)) / p));
  return r;
}

/// Minimized weight decay from squared Frobenius norms: (L+1) times their
/// geometric mean. After shifting with the returned factors every layer has
/// the same norm.
inline MinimizedPenalty minimized_wd(const std::vector<double>& norms_sq) {
  for (std::size_t i = 0; i < norms_sq.size(); ++i) {
    if (!(norms_sq[i] > 0.0)) {
      throw DegenerateLayerError("minimized_wd: layer " + std::to_string(i) + " has zero norm");
    }
  }
  return minimized_family(norms_sq, 2.0);
}

inline std::vector<double> squared_norms(const Network& net, bool shiftable_only = true) {
  std::vector<double> out;
  for (const auto& r : shiftable_only ? net.shift_refs() : net.weight_refs())
    out.push_back(sum_squares(net.weight(r).data));
  return out;
}

// Canonical form --------------------------------------------------------------

struct Normalizer {
  enum class Kind { frobenius, lpq } kind = Kind::frobenius;
  double p = 2.0;
  double q = 2.0;

  static Normalizer frobenius() { return {}; }
  static Normalizer lpq(double p, double q) { return {Kind::lpq, p, q}; }
  std::string name() const {
    if (kind == Kind::frobenius) return "frobenius";
    return "l_" + std::to_string(p) + "," + std::to_string(q);
  }
  double operator()(const Tensor& w, LayerKind k) const {
    return kind == Kind::frobenius ? frobenius_norm(w) : lpq_norm(w, k, p, q);
  }
};

/// A network factored into unit-norm weights and one scalar energy.
struct CanonicalForm {
  std::vector<Tensor> normalized_weights;
  std::vector<double> norms;  ///< eta(W_l) per weight factor
  double energy = 1.0;        ///< product of the norms
  std::string normalizer;
};

inline CanonicalForm canonicalize(const Network& net, Normalizer eta = Normalizer::frobenius()) {
  CanonicalForm cf;
  cf.normalizer = eta.name();
  for (const auto& r : net.weight_refs()) {
    const Tensor& w = net.weight(r);
    const double n = eta(w, r.kind);
    if (!(n > 0.0)) {
      throw DegenerateLayerError("canonicalize: layer " + std::to_string(r.layer) + " (" +
                                 std::string(r.role) + ") has zero norm");
    }
    cf.norms.push_back(n);
    cf.energy *= n;
    cf.normalized_weights.push_back(scaled(w, 1.0 / n));
  }
  return cf;
}

/// Equivalent network whose shiftable factors have unit norm except factor
/// `target`, which carries the whole energy.
inline Network reassemble(const Network& net, std::size_t target,
                          Normalizer eta = Normalizer::frobenius()) {
  const auto refs = net.shift_refs();
  if (target >= refs.size()) throw ContractError("reassemble: target factor out of range");
  std::vector<double> norms;
  for (const auto& r : refs) norms.push_back(eta(net.weight(r), r.kind));
  double log_energy = 0.0;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (!(norms[i] > 0.0)) throw DegenerateLayerError("reassemble: zero-norm layer");
    log_energy += std::log(norms[i]);
  }
  std::vector<double> g(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i) g[i] = 1.0 / norms[i];
  g[target] = std::exp(log_energy) / norms[target];
  // Rounding in the energy can leave the product a few ulps away from one;
  // fold the residue into the target factor.
  double prod = 1.0;
  for (double x : g) prod *= x;
  g[target] /= prod;
  return apply_shift(net, ScaleShift(std::move(g)));
}

// Equivalence probe -------------------------------------------------------------

struct EquivalenceReport {
  double max_abs_diff = 0.0;
  std::size_t probes = 0;
};

/// max |f_a(x) - f_b(x)| over standard-normal probe inputs.
inline EquivalenceReport check_equivalence(const Network& a, const Network& b, std::size_t n_probes,
                                           std::uint64_t seed) {
  if (a.input_shape() != b.input_shape() || a.output_shape() != b.output_shape()) {
    throw ShapeError("check_equivalence: networks have different input/output dims");
  }
  Rng rng(seed);
  Shape s = a.input_shape();
  s.insert(s.begin(), n_probes);
  const Tensor x = randn(s, rng);
  EquivalenceReport r;
  r.probes = n_probes;
  if (n_probes == 0) return r;
  r.max_abs_diff = max_abs_diff(predict(a, x), predict(b, x));
  return r;
}

}  // namespace weissi
