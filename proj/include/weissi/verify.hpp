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

// Built-in property suites (algebra, gradients, bounds) and the model audit.
// Each check is a plain function so the acceptance suite can run it with its
// own trial counts and tolerances.

#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "weissi/analysis.hpp"
#include "weissi/regularizers.hpp"
#include "weissi/scale_shift.hpp"
#include "weissi/testing/oracles.hpp"

namespace weissi {

struct CheckResult {
  std::string name;
  bool passed = false;
  double metric = 0.0;     ///< worst observed error (or slack), see detail
  double tolerance = 0.0;
  std::size_t trials = 0;
  std::string detail;
};

inline nlohmann::json to_json(const CheckResult& c) {
  return {{"name", c.name},         {"passed", c.passed}, {"metric", c.metric},
          {"tolerance", c.tolerance}, {"trials", c.trials}, {"detail", c.detail}};
}

namespace checks {

using testing::rel_err;

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

/// Random ReLU MLPs with 2..6 dense layers, random valid shifts, random
/// inputs: max |f(x) - f_shifted(x)|.
inline CheckResult shift_equivalence(std::size_t nets, std::size_t shifts, std::size_t inputs, double tol,
                                     std::uint64_t seed) {
  CheckResult r{"shift_equivalence", false, 0.0, tol, nets * shifts, ""};
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> depth(2, 6);
  for (std::size_t n = 0; n < nets; ++n) {
    const Network net = testing::random_mlp(rng, depth(rng));
    Shape s{inputs, net.input_shape()[0]};
    const Tensor x = randn(s, rng);
    const Tensor y = predict(net, x);
    for (std::size_t k = 0; k < shifts; ++k) {
      const Network shifted = apply_shift(net, ScaleShift::random(net.shift_refs().size(), rng, 1.5));
      r.metric = std::max(r.metric, max_abs_diff(predict(shifted, x), y));
    }
  }
  r.passed = r.metric < tol;
  r.detail = "max abs output difference over " + std::to_string(inputs) + " inputs per shift";
  return r;
}

/// Closed-form minimized weight decay vs the numerical constrained minimum,
/// and equal shifted norms at the closed-form factors.
inline CheckResult minimized_wd_matches_numeric(std::size_t tuples, double tol, std::uint64_t seed) {
  CheckResult r{"minimized_wd_vs_numeric", false, 0.0, tol, tuples, ""};
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> len(2, 7);
  std::uniform_real_distribution<double> logn(std::log(1e-2), std::log(1e2));
  double worst_equal = 0.0;
  for (std::size_t t = 0; t < tuples; ++t) {
    std::vector<double> ns(len(rng));
    for (double& v : ns) v = std::exp(logn(rng));
    const MinimizedPenalty mp = minimized_wd(ns);
    const auto num = testing::minimize_over_shifts(ns, 2.0);
    r.metric = std::max(r.metric, rel_err(mp.value, num.value));
    std::vector<double> shifted(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) shifted[i] = mp.gammas[i] * mp.gammas[i] * ns[i];
    for (double v : shifted) worst_equal = std::max(worst_equal, rel_err(v, shifted[0]));
  }
  r.metric = std::max(r.metric, worst_equal);
  r.passed = r.metric <= tol;
  r.detail = "max rel error of the minimum and of the shifted-norm spread";
  return r;
}

/// The ineffective-family closed form for g = ||.||_{p,q}^q vs numerical
/// minimization over shifts, evaluated on actual rescaled matrices.
inline CheckResult ineffective_family(std::size_t trials, double tol, std::uint64_t seed) {
  CheckResult r{"ineffective_family_lpq", false, 0.0, tol, 0, ""};
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> len(2, 6), dim(2, 7);
  const std::vector<std::pair<double, double>> pq = {{1, 1}, {2, 2}, {2, 1}, {3, 2}};
  for (const auto& [p, q] : pq) {
    for (std::size_t t = 0; t < trials; ++t) {
      std::vector<Tensor> ws;
      std::vector<double> g;
      const std::size_t n = len(rng);
      for (std::size_t l = 0; l < n; ++l) {
        ws.push_back(randn(Shape{dim(rng), dim(rng)}, rng, std::exp(std::uniform_real_distribution<double>(-1, 1)(rng))));
        g.push_back(lpq_norm_pow_q(ws.back(), LayerKind::dense, p, q));
      }
      const double closed = minimized_family(g, q).value;
      const auto num = testing::minimize_over_shifts(g, q);
      double at_opt = 0.0;
      for (std::size_t l = 0; l < n; ++l) at_opt += lpq_norm_pow_q(scaled(ws[l], num.gammas[l]), LayerKind::dense, p, q);
      r.metric = std::max(r.metric, rel_err(closed, at_opt));
      ++r.trials;
    }
  }
  r.passed = r.metric <= tol;
  r.detail = "(p,q) in {(1,1),(2,2),(2,1),(3,2)}; max rel error closed form vs numeric minimum";
  return r;
}

/// Doubling one layer's penalty multiplies the minimum by 2^(1/(L+1)).
inline CheckResult effective_factor(std::size_t trials, double tol, std::uint64_t seed) {
  CheckResult r{"effective_factor", false, 0.0, tol, trials, ""};
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> len(2, 12);
  std::uniform_real_distribution<double> gv(0.1, 10.0);
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> g(len(rng));
    for (double& v : g) v = gv(rng);
    const double base = minimized_family(g, 1.0).value;
    std::vector<double> g2 = g;
    g2[rng() % g2.size()] *= 2.0;
    const double ratio = minimized_family(g2, 1.0).value / base;
    r.metric = std::max(r.metric, rel_err(ratio, std::pow(2.0, 1.0 / static_cast<double>(g.size()))));
  }
  r.passed = r.metric <= tol;
  r.detail = "max rel error of the ratio against 2^(1/(L+1))";
  return r;
}

/// weissi / weissi_log unchanged by random shifts; weight decay changes to
/// sum gamma_l^2 ||W_l||^2.
inline CheckResult weissi_invariance(std::size_t nets, double tol, double wd_tol, std::uint64_t seed) {
  CheckResult r{"weissi_invariance", false, 0.0, tol, nets, ""};
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> depth(2, 6);
  double worst_wd = 0.0, min_wd_change = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < nets; ++n) {
    const Network net = testing::random_mlp(rng, depth(rng));
    const ScaleShift s = ScaleShift::random(net.shift_refs().size(), rng, 1.0);
    const Network sh = apply_shift(net, s);
    const RegValue a = weissi(net, 1.0, 1.0), b = weissi(sh, 1.0, 1.0);
    const RegValue la = weissi_log(net, 1.0, 1.0), lb = weissi_log(sh, 1.0, 1.0);
    r.metric = std::max({r.metric, rel_err(b.energy_term, a.energy_term), rel_err(b.complexity_term, a.complexity_term),
                         rel_err(b.total, a.total),
                         // Log energies can be near zero; measure against max(|v|, 1).
                         std::abs(lb.energy_term - la.energy_term) / std::max(1.0, std::abs(la.energy_term))});
    const auto ns = squared_norms(net);
    double predicted = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) predicted += s[i] * s[i] * ns[i];
    worst_wd = std::max(worst_wd, rel_err(wd(sh), predicted));
    min_wd_change = std::min(min_wd_change, rel_err(wd(sh), wd(net)));
  }
  r.passed = r.metric <= tol && worst_wd <= wd_tol && min_wd_change > 1e-6;
  r.detail = "weissi rel change " + sci(r.metric) + "; wd vs predicted rel err " + sci(worst_wd) +
             "; smallest wd rel change " + sci(min_wd_change);
  return r;
}

inline CheckResult corrupted_shift_rejected() {
  CheckResult r{"corrupted_shift_rejected", false, 0.0, 0.0, 1, ""};
  try {
    ScaleShift s({2.0, 0.6});
    r.detail = "accepted a shift with product 1.2";
  } catch (const ProductConstraintError& e) {
    r.passed = true;
    r.detail = e.what();
  }
  return r;
}

inline CheckResult canonical_invariance(std::size_t nets, double tol, std::uint64_t seed) {
  CheckResult r{"canonical_form_invariance", false, 0.0, tol, nets, ""};
  Rng rng(seed);
  for (std::size_t n = 0; n < nets; ++n) {
    const Network net = testing::random_mlp(rng, 2 + n % 4);
    const Network sh = apply_shift(net, ScaleShift::random(net.shift_refs().size(), rng));
    const CanonicalForm a = canonicalize(net), b = canonicalize(sh);
    r.metric = std::max(r.metric, rel_err(b.energy, a.energy));
    for (std::size_t l = 0; l < a.normalized_weights.size(); ++l)
      r.metric = std::max(r.metric, max_abs_diff(a.normalized_weights[l], b.normalized_weights[l]));
  }
  r.passed = r.metric <= tol;
  r.detail = "max elementwise difference of normalized weights / rel energy difference";
  return r;
}

/// Analytic reg gradients against central differences and against reverse
/// mode applied to the penalty expression.
inline CheckResult reg_gradients(std::size_t nets, double fd_tol, double tape_tol, std::uint64_t seed) {
  CheckResult r{"reg_grad_fidelity", false, 0.0, fd_tol, 0, ""};
  Rng rng(seed);
  double worst_fd = 0.0, worst_tape = 0.0, worst_formula = 0.0;
  auto run = [&](Network& net, const RegularizerConfig& cfg, bool tape_ok) {
    const auto refs = net.weight_refs();
    const auto analytic = reg_grad(net, cfg);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      Tensor& w = net.weight(refs[i]);
      const auto fd = testing::central_difference([&] { return evaluate(net, cfg).total; }, w.data, 1e-5);
      worst_fd = std::max(worst_fd, rel_err(analytic[i].data, fd, 1e-8));
    }
    if (tape_ok) {
      Tape tape;
      std::vector<Var> vars;
      std::vector<LayerKind> kinds;
      for (const auto& ref : refs) {
        vars.push_back(tape.input(net.weight(ref), true));
        kinds.push_back(ref.kind);
      }
      tape.backward(reg_expression(tape, vars, kinds, cfg));
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto g = tape.grad(vars[i]);
        worst_tape = std::max(worst_tape, rel_err(analytic[i].data, g->data, 1e-300));
      }
    }
    ++r.trials;
  };
  for (std::size_t n = 0; n < nets; ++n) {
    Network net = testing::random_mlp(rng, 3, 6);
    // Unit-scale norms keep the energy product moderate for differencing.
    run(net, RegularizerConfig::weight_decay(1.0), true);
    run(net, RegularizerConfig::lpq_family(1.0, 2.0, 2.0), true);
    run(net, RegularizerConfig::lpq_family(1.0, 3.0, 3.0), true);
    run(net, RegularizerConfig::lpq_family(1.0, 2.0, 1.0), false);
    run(net, RegularizerConfig::weissi(1.0, 1.0), true);
    run(net, RegularizerConfig::weissi(1.0, 0.0), true);
    run(net, RegularizerConfig::weissi(0.0, 1.0), true);
    run(net, RegularizerConfig::weissi(1.0, 1.0, RegKind::weissi_log), true);

    // Energy gradient formula 2 W_l prod_{j != l} ||W_j||^2, written out.
    const auto refs = net.weight_refs();
    const auto g = reg_grad(net, RegularizerConfig::weissi(1.0, 0.0));
    const auto ns = squared_norms(net, false);
    for (std::size_t l = 0; l < refs.size(); ++l) {
      double others = 1.0;
      for (std::size_t j = 0; j < refs.size(); ++j)
        if (j != l) others *= ns[j];
      const Tensor expect = scaled(net.weight(refs[l]), 2.0 * others);
      worst_formula = std::max(worst_formula, rel_err(g[l].data, expect.data));
    }

    Network cnn(Shape{2, 5, 5}, {LayerSpec::conv(2, 3, 3, 1, 1), LayerSpec::activation(LayerKind::relu),
                                 LayerSpec::conv(3, 2, 3, 1, 1), LayerSpec::activation(LayerKind::relu),
                                 LayerSpec::activation(LayerKind::flatten), LayerSpec::dense_layer(50, 3)});
    init(cnn, {}, rng());
    run(cnn, RegularizerConfig::weissi(1.0, 1.0, RegKind::weissi_cnn), true);
    run(cnn, RegularizerConfig::weissi(1.0, 1.0), true);
  }
  r.metric = worst_fd;
  r.passed = worst_fd <= fd_tol && worst_tape <= tape_tol && worst_formula <= tape_tol;
  r.detail = "fd rel err " + sci(worst_fd) + " (tol " + sci(fd_tol) + "); tape rel err " +
             sci(worst_tape) + ", energy formula rel err " + sci(worst_formula) + " (tol " +
             sci(tape_tol) + ")";
  return r;
}

/// Data-loss parameter gradients of small networks (dense, conv, pooling,
/// residual) against central differences.
inline CheckResult network_gradients(std::size_t nets, double tol, std::uint64_t seed) {
  CheckResult r{"network_param_gradients", false, 0.0, tol, 0, ""};
  Rng rng(seed);
  auto run = [&](Network& net, const Tensor& x, const std::vector<int>& labels) {
    net.zero_grad();
    {
      Tape tape;
      const BoundParams p = bind(tape, net, true);
      tape.backward(ops::softmax_cross_entropy(forward(net, p, tape.input(x)), labels));
    }
    auto loss = [&] {
      Tape tape;
      const BoundParams p = bind(tape, net);
      return ops::softmax_cross_entropy(forward(net, p, tape.input(x)), labels).value().item();
    };
    for (Tensor* t : net.params()) {
      const std::vector<double> analytic = t->grad ? *t->grad : std::vector<double>(t->size(), 0.0);
      const auto fd = testing::central_difference(loss, t->data, 1e-5);
      r.metric = std::max(r.metric, rel_err(analytic, fd, 1e-6));
    }
    ++r.trials;
  };
  for (std::size_t n = 0; n < nets; ++n) {
    Network mlp_net = testing::random_mlp(rng, 3, 8);
    const std::size_t classes = mlp_net.output_shape()[0];
    std::vector<int> labels(4);
    for (int& l : labels) l = static_cast<int>(rng() % classes);
    run(mlp_net, randn(Shape{4, mlp_net.input_shape()[0]}, rng), labels);

    Network cnn(Shape{2, 6, 6}, {LayerSpec::conv(2, 3, 3, 1, 1), LayerSpec::activation(LayerKind::relu),
                                 LayerSpec::pool(LayerKind::maxpool, 2, 2), LayerSpec::conv(3, 2, 3, 1, 0),
                                 LayerSpec::pool(LayerKind::avgpool, 1, 1), LayerSpec::activation(LayerKind::flatten),
                                 LayerSpec::dense_layer(2, 3)});
    init(cnn, {}, rng());
    for (auto& l : cnn.layers())
      for (double& b : l.bias.data) b = 0.1 * std::normal_distribution<double>()(rng);
    std::vector<int> cl(3);
    for (int& l : cl) l = static_cast<int>(rng() % 3);
    run(cnn, randn(Shape{3, 2, 6, 6}, rng), cl);

    Network res = residual_chain(4, 5, 6, 3, 3, Aggregation::convex, true, true);
    init(res, {}, rng());
    for (auto& l : res.layers())
      for (Tensor* t : l.params())
        if (t != &l.weight && t != &l.w1 && t != &l.w2 && t != &l.w3)
          for (double& v : t->data) v = 0.3 * std::normal_distribution<double>()(rng);
    run(res, randn(Shape{3, 4}, rng), cl);
  }
  r.passed = r.metric <= tol;
  r.detail = "max rel error of parameter gradients vs central differences";
  return r;
}

/// Reverse-mode input gradient vs the explicit gate/weight product.
inline CheckResult input_gradient_two_paths(std::size_t trials, double tol, std::uint64_t seed) {
  CheckResult r{"input_gradient_two_paths", false, 0.0, tol, trials, ""};
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> depth(1, 5);
  for (std::size_t t = 0; t < trials; ++t) {
    const Network net = testing::random_mlp(rng, depth(rng));
    const Tensor x = randn(net.input_shape(), rng);
    const std::size_t j = rng() % net.output_shape()[0];
    const Tensor a = input_gradient(net, x, LogitTarget{j});
    const Tensor b = input_gradient_jacobian_product(net, x, j);
    r.metric = std::max(r.metric, rel_err(a.data, b.data, 1e-12));
  }
  r.passed = r.metric <= tol;
  r.detail = "max rel difference between the two gradient paths";
  return r;
}

/// Monte-Carlo check of the product-norm bound on random 3-layer ReLU nets;
/// metric is the largest ratio ||grad|| / bound (must stay <= 1).
inline CheckResult gradient_bound_monte_carlo(std::size_t trials, std::uint64_t seed) {
  CheckResult r{"gradient_bound_monte_carlo", false, 0.0, 1.0, trials, ""};
  Rng rng(seed);
  std::size_t violations = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Network net = testing::random_mlp(rng, 3, 16);
    const Tensor x = randn(net.input_shape(), rng, 2.0);
    for (std::size_t j = 0; j < net.output_shape()[0]; ++j) {
      const double g = frobenius_norm(input_gradient(net, x, LogitTarget{j}));
      const double b = gradient_bound(net, j);
      r.metric = std::max(r.metric, g / b);
      if (g > b * (1.0 + 1e-9)) ++violations;
    }
  }
  r.passed = violations == 0;
  r.detail = std::to_string(violations) + " violations; max ratio gradient/bound " + sci(r.metric) +
             " (max slack " + sci(1.0 - r.metric) + ")";
  return r;
}

/// For a single linear layer the bound equals the gradient norm.
inline CheckResult gradient_bound_single_layer(std::size_t trials, double tol, std::uint64_t seed) {
  CheckResult r{"gradient_bound_single_layer", false, 0.0, tol, trials, ""};
  Rng rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const Network net = testing::random_mlp(rng, 1, 10);
    const Tensor x = randn(net.input_shape(), rng);
    for (std::size_t j = 0; j < net.output_shape()[0]; ++j) {
      const double g = frobenius_norm(input_gradient(net, x, LogitTarget{j}));
      r.metric = std::max(r.metric, rel_err(gradient_bound(net, j), g));
    }
  }
  r.passed = r.metric <= tol;
  r.detail = "max rel difference between bound and gradient norm";
  return r;
}

/// Direct R_L vs the 2^L-term expansion for L = 1..max_blocks; the
/// multiplier is exactly 1 with convex aggregation and exactly 2^L for
/// standard blocks.
inline CheckResult residual_expansion(std::size_t max_blocks, double tol, std::uint64_t seed) {
  CheckResult r{"residual_expansion", false, 0.0, tol, 0, ""};
  Rng rng(seed);
  bool multipliers_exact = true, bounds_hold = true;
  for (std::size_t L = 1; L <= max_blocks; ++L) {
    Network net = residual_chain(5, 6, 6, L + 1, 3, Aggregation::convex, false, true);
    init(net, {}, rng());
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& l : net.layers()) {
      if (l.spec.kind != LayerKind::residual_block) continue;
      for (double& v : l.agg_logits.data) v = nd(rng);
      for (double& v : l.b1.data) v = 0.1 * nd(rng);
      for (double& v : l.b2.data) v = 0.1 * nd(rng);
      // Keep ||branch Jacobian|| near one so 2^L-term sums stay well scaled.
      for (double& v : l.w2.data) v *= 0.5;
    }
    const Tensor x = randn(net.input_shape(), rng);
    for (auto mode : {ResidualMode::convex_aggregation, ResidualMode::standard}) {
      const ResidualBoundReport rep = residual_bound_check(net, x, mode);
      const double scale = std::max(1.0, rep.R_L_norm);
      r.metric = std::max(r.metric, rep.expansion_max_abs_diff / scale);
      if (mode == ResidualMode::convex_aggregation) {
        multipliers_exact = multipliers_exact && rep.alpha_beta_product == 1.0 && rep.multiplier == 1.0;
      } else {
        multipliers_exact = multipliers_exact && rep.multiplier == std::ldexp(1.0, static_cast<int>(L)) &&
                            rep.expansion_terms == (std::size_t{1} << L);
      }
      bounds_hold = bounds_hold && rep.bound_holds;
      ++r.trials;
    }
  }
  r.passed = r.metric <= tol && multipliers_exact && bounds_hold;
  r.detail = "max |direct - expansion| / max(1, ||R_L||) = " + sci(r.metric) +
             "; multipliers exact: " + (multipliers_exact ? "yes" : "no") + "; bounds hold: " + (bounds_hold ? "yes" : "no");
  return r;
}

}  // namespace checks

// Suites -----------------------------------------------------------------------------

enum class Suite { algebra, gradients, bounds, all };

inline Suite suite_from_string(std::string_view s) {
  if (s == "algebra") return Suite::algebra;
  if (s == "gradients") return Suite::gradients;
  if (s == "bounds") return Suite::bounds;
  if (s == "all") return Suite::all;
  throw ConfigError("suite", "unknown suite '" + std::string(s) + "'");
}

struct VerifyOptions {
  std::size_t trials = 0;  ///< 0 = suite defaults
  std::uint64_t seed = 0;
};

struct VerifyReport {
  std::string suite;
  std::vector<CheckResult> checks;
  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

inline nlohmann::json to_json(const VerifyReport& r) {
  nlohmann::json j = {{"suite", r.suite}, {"passed", r.passed()}, {"checks", nlohmann::json::array()}};
  for (const auto& c : r.checks) j["checks"].push_back(to_json(c));
  return j;
}

/// Runs the property checks of a suite. Default sizes: algebra on 100 random
/// networks, bounds with 1000 Monte-Carlo trials.
inline VerifyReport verify(Suite suite, const VerifyOptions& opt = {}) {
  VerifyReport rep;
  const char* names[] = {"algebra", "gradients", "bounds", "all"};
  rep.suite = names[static_cast<int>(suite)];
  auto n = [&](std::size_t dflt) { return opt.trials ? opt.trials : dflt; };
  const std::uint64_t s = opt.seed;
  if (suite == Suite::algebra || suite == Suite::all) {
    rep.checks.push_back(checks::shift_equivalence(n(100), 10, 20, 1e-9, derive_seed(s, SeedPurpose::probe, 1)));
    rep.checks.push_back(checks::minimized_wd_matches_numeric(n(100), 1e-8, derive_seed(s, SeedPurpose::probe, 2)));
    rep.checks.push_back(checks::ineffective_family(n(25), 1e-6, derive_seed(s, SeedPurpose::probe, 3)));
    rep.checks.push_back(checks::effective_factor(n(100), 1e-10, derive_seed(s, SeedPurpose::probe, 4)));
    rep.checks.push_back(checks::weissi_invariance(n(100), 1e-12, 1e-10, derive_seed(s, SeedPurpose::probe, 5)));
    rep.checks.push_back(checks::corrupted_shift_rejected());
    rep.checks.push_back(checks::canonical_invariance(n(100), 1e-12, derive_seed(s, SeedPurpose::probe, 6)));
  }
  if (suite == Suite::gradients || suite == Suite::all) {
    rep.checks.push_back(checks::reg_gradients(n(5), 1e-4, 1e-10, derive_seed(s, SeedPurpose::probe, 7)));
    rep.checks.push_back(checks::network_gradients(n(3), 1e-5, derive_seed(s, SeedPurpose::probe, 8)));
    rep.checks.push_back(checks::input_gradient_two_paths(n(100), 1e-10, derive_seed(s, SeedPurpose::probe, 9)));
  }
  if (suite == Suite::bounds || suite == Suite::all) {
    rep.checks.push_back(checks::gradient_bound_monte_carlo(n(1000), derive_seed(s, SeedPurpose::probe, 10)));
    rep.checks.push_back(checks::gradient_bound_single_layer(n(100), 1e-12, derive_seed(s, SeedPurpose::probe, 11)));
    rep.checks.push_back(checks::residual_expansion(10, 1e-10, derive_seed(s, SeedPurpose::probe, 12)));
  }
  return rep;
}

// Model audit ----------------------------------------------------------------------------

/// Regularizer values of a model and their behavior under random shifts.
inline nlohmann::json audit(const Network& net, std::size_t shifts, std::uint64_t seed) {
  nlohmann::json j;
  bool homogeneous = true;
  for (const auto& l : net.layers()) homogeneous = homogeneous && l.spec.positively_homogeneous();
  const auto refs = net.weight_refs();
  j["weight_factors"] = refs.size();
  j["shiftable_factors"] = net.shift_refs().size();
  j["positively_homogeneous"] = homogeneous;
  j["param_count"] = net.param_count();
  j["wd"] = wd(net);
  j["sparsity"] = weight_sparsity(net);
  j["per_layer_frobenius"] = nlohmann::json::array();
  for (const auto& r : refs) j["per_layer_frobenius"].push_back(frobenius_norm(net.weight(r)));
  try {
    const RegValue w = weissi(net, 1.0, 1.0);
    const RegValue wl = weissi_log(net, 1.0, 1.0);
    j["weissi"] = {{"energy", w.energy_term}, {"complexity", w.complexity_term}};
    j["weissi_log"] = {{"energy", wl.energy_term}, {"complexity", wl.complexity_term}};
    j["minimized_wd"] = minimized_wd(squared_norms(net)).value;
  } catch (const DegenerateLayerError& e) {
    j["weissi"] = nullptr;
    j["degenerate"] = e.what();
  }
  try {
    const RegValue wc = weissi_cnn(net, 1.0, 1.0);
    j["weissi_cnn"] = {{"energy", wc.energy_term}, {"complexity", wc.complexity_term}};
  } catch (const Error&) {
    j["weissi_cnn"] = nullptr;
  }
  if (homogeneous && j["weissi"].is_object() && shifts > 0) {
    Rng rng(seed);
    double energy_rel = 0.0, complexity_rel = 0.0, wd_min = 1e300, wd_max = 0.0, out_diff = 0.0;
    const RegValue base = weissi(net, 1.0, 1.0);
    const double wd0 = wd(net);
    for (std::size_t k = 0; k < shifts; ++k) {
      const Network sh = apply_shift(net, ScaleShift::random(net.shift_refs().size(), rng, 0.5));
      const RegValue v = weissi(sh, 1.0, 1.0);
      energy_rel = std::max(energy_rel, testing::rel_err(v.energy_term, base.energy_term));
      complexity_rel = std::max(complexity_rel, testing::rel_err(v.complexity_term, base.complexity_term));
      wd_min = std::min(wd_min, wd(sh) / wd0);
      wd_max = std::max(wd_max, wd(sh) / wd0);
      out_diff = std::max(out_diff, check_equivalence(net, sh, 8, rng()).max_abs_diff);
    }
    j["shift_probe"] = {{"shifts", shifts},
                        {"weissi_energy_max_rel_change", energy_rel},
                        {"weissi_complexity_max_rel_change", complexity_rel},
                        {"wd_ratio_range", {wd_min, wd_max}},
                        {"max_output_diff", out_diff}};
  }
  return j;
}

}  // namespace weissi
