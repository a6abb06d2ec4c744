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

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <variant>
#include <vector>

#include <json.hpp>

#include "weissi/attacks.hpp"

namespace weissi {

// Input gradients -------------------------------------------------------------

/// Differentiate logit j.
struct LogitTarget {
  std::size_t j = 0;
};
/// Differentiate the cross-entropy loss for `label`.
struct LossTarget {
  int label = 0;
};
using GradTarget = std::variant<LogitTarget, LossTarget>;

/// Gradient of a logit or of the loss with respect to one unbatched input x
/// (shape = net.input_shape()), by reverse mode.
inline Tensor input_gradient(const Network& net, const Tensor& x, GradTarget target) {
  if (x.shape != net.input_shape()) {
    throw ShapeError("input_gradient: x is " + shape_str(x.shape) + ", network expects " +
                     shape_str(net.input_shape()));
  }
  Shape batched = x.shape;
  batched.insert(batched.begin(), 1);
  Tape tape;
  const BoundParams p = bind(tape, net);
  const Tensor xb = x.reshaped(batched);
  Var xv = tape.input(xb, true);
  Var logits = forward(net, p, xv);
  Var root = std::visit(
      [&](auto t) -> Var {
        if constexpr (std::is_same_v<decltype(t), LogitTarget>) {
          if (t.j >= logits.value().shape.back()) throw ContractError("input_gradient: logit index out of range");
          return ops::select_logit(logits, t.j);
        } else {
          return ops::softmax_cross_entropy(logits, t.label);
        }
      },
      target);
  tape.backward(root);
  auto g = tape.grad(xv);
  return g ? g->reshaped(x.shape) : Tensor(x.shape);
}

namespace analysis_detail {

/// Dense layers of a chain made of dense and relu layers (an optional leading
/// flatten allowed), with whether each is followed by a relu gate.
struct DenseChain {
  std::vector<const Layer*> dense;
  std::vector<bool> gated;
};

inline std::optional<DenseChain> dense_chain(const Network& net) {
  DenseChain c;
  const auto& ls = net.layers();
  if (ls.empty() || ls.back().spec.kind != LayerKind::dense) return std::nullopt;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const auto k = ls[i].spec.kind;
    if (k == LayerKind::flatten && i == 0) continue;
    if (k == LayerKind::dense) {
      c.dense.push_back(&ls[i]);
      c.gated.push_back(false);
    } else if (k == LayerKind::relu) {
      if (c.dense.empty() || c.gated.back()) return std::nullopt;
      c.gated.back() = true;
    } else {
      return std::nullopt;
    }
  }
  return c;
}

/// y = W x (+ b), W row-major [out x in].
inline std::vector<double> affine(const Layer& l, const std::vector<double>& x) {
  const std::size_t out = l.weight.dim(0), in = l.weight.dim(1);
  std::vector<double> y(out, 0.0);
  for (std::size_t r = 0; r < out; ++r) {
    double s = l.spec.has_bias ? l.bias[r] : 0.0;
    const double* w = l.weight.data.data() + r * in;
    for (std::size_t c = 0; c < in; ++c) s += w[c] * x[c];
    y[r] = s;
  }
  return y;
}

/// x = W^T v.
inline std::vector<double> affine_t(const Tensor& w, const std::vector<double>& v) {
  const std::size_t out = w.dim(0), in = w.dim(1);
  std::vector<double> x(in, 0.0);
  for (std::size_t r = 0; r < out; ++r) {
    const double* row = w.data.data() + r * in;
    for (std::size_t c = 0; c < in; ++c) x[c] += row[c] * v[r];
  }
  return x;
}

}  // namespace analysis_detail

inline bool is_dense_chain(const Network& net) { return analysis_detail::dense_chain(net).has_value(); }

/// Gradient of logit j for a dense/ReLU chain assembled explicitly as
///   d y_j / d x = W_1^T J_1 W_2^T J_2 ... W_L^T J_L w_{L+1,j},
/// where J_l is the diagonal 0/1 gate of the relu after layer l (identity when
/// there is none).
inline Tensor input_gradient_jacobian_product(const Network& net, const Tensor& x, std::size_t j) {
  using namespace analysis_detail;
  const auto chain = dense_chain(net);
  if (!chain) throw ContractError("input_gradient_jacobian_product: network is not a dense/ReLU chain");
  std::vector<double> h(x.data);
  std::vector<std::vector<char>> gates;
  const std::size_t n = chain->dense.size();
  for (std::size_t l = 0; l + 1 < n; ++l) {
    std::vector<double> z = affine(*chain->dense[l], h);
    std::vector<char> g(z.size(), 1);
    if (chain->gated[l]) {
      for (std::size_t i = 0; i < z.size(); ++i) {
        g[i] = z[i] > 0.0;
        if (!g[i]) z[i] = 0.0;
      }
    }
    gates.push_back(std::move(g));
    h = std::move(z);
  }
  const Tensor& last = chain->dense.back()->weight;
  if (j >= last.dim(0)) throw ContractError("input_gradient_jacobian_product: logit index out of range");
  std::vector<double> v(last.data.begin() + j * last.dim(1), last.data.begin() + (j + 1) * last.dim(1));
  for (std::size_t l = n - 1; l-- > 0;) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!gates[l][i]) v[i] = 0.0;
    v = affine_t(chain->dense[l]->weight, v);
  }
  return Tensor(x.shape, std::move(v));
}

/// Product-norm upper bound on ||d y_j / d x||_2 for a dense/ReLU chain:
///   C * prod_{l<=L} ||W_l||_F * ||w_{L+1,j}||_2,  C = prod_l H_l,
/// with H_l the width of hidden layer l. `tight` uses sqrt(H_l) instead.
inline double gradient_bound(const Network& net, std::size_t j, bool tight = false) {
  const auto chain = analysis_detail::dense_chain(net);
  if (!chain) throw ContractError("gradient_bound: the bound is defined for dense/ReLU chains only");
  const std::size_t n = chain->dense.size();
  double b = 1.0;
  for (std::size_t l = 0; l + 1 < n; ++l) {
    const Tensor& w = chain->dense[l]->weight;
    const double h = static_cast<double>(w.dim(0));
    b *= (tight ? std::sqrt(h) : h) * frobenius_norm(w);
  }
  const Tensor& last = chain->dense.back()->weight;
  if (j >= last.dim(0)) throw ContractError("gradient_bound: logit index out of range");
  const std::span<const double> row(last.data.data() + j * last.dim(1), last.dim(1));
  return b * std::sqrt(sum_squares(row));
}

// Residual chains ---------------------------------------------------------------

enum class ResidualMode { convex_aggregation, standard };

struct ResidualBoundReport {
  std::size_t blocks = 0;             ///< L: dimension-preserving blocks in the chain
  std::size_t expansion_terms = 0;    ///< 2^L
  double R_L_norm = 0.0;              ///< ||R_L||_F of the direct product
  double expansion_max_abs_diff = 0.0;
  double sigma = 0.0;                 ///< max over subsets of the product-term norm
  double alpha_beta_product = 1.0;    ///< prod_l (alpha_l + beta_l)
  double multiplier = 1.0;            ///< prod_l (s_l alpha_l + beta_l), s_l the shortcut multiplier
  double ca_bound = 0.0;              ///< multiplier * sigma
  double standard_bound = 0.0;        ///< 2^L * sigma
  bool bound_holds = false;           ///< R_L_norm <= multiplier * sigma
  std::vector<double> alphas, betas;
};

inline nlohmann::json to_json(const ResidualBoundReport& r) {
  return {{"blocks", r.blocks},
          {"expansion_terms", r.expansion_terms},
          {"R_L_norm", r.R_L_norm},
          {"expansion_max_abs_diff", r.expansion_max_abs_diff},
          {"sigma", r.sigma},
          {"alpha_beta_product", r.alpha_beta_product},
          {"multiplier", r.multiplier},
          {"ca_bound", r.ca_bound},
          {"standard_bound", r.standard_bound},
          {"bound_holds", r.bound_holds},
          {"alphas", r.alphas},
          {"betas", r.betas}};
}

namespace analysis_detail {

/// Square row-major matrix.
struct Mat {
  std::size_t n = 0;
  std::vector<double> a;
  static Mat identity(std::size_t n) {
    Mat m{n, std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) m.a[i * n + i] = 1.0;
    return m;
  }
  Mat operator*(const Mat& o) const {
    Mat r{n, std::vector<double>(n * n, 0.0)};
    blas::gemm(blas::Op::none, blas::Op::none, n, n, n, 1.0, a.data(), n, o.a.data(), n, 0.0, r.a.data(), n);
    return r;
  }
  double frob() const { return std::sqrt(sum_squares(a)); }
};

/// Per-block data at the evaluation point: B_l = J1 W1^T J2 W2^T (the
/// transposed branch Jacobian), the shortcut multiplier and (alpha, beta).
struct BlockTerm {
  Mat branch_t;
  double s = 1.0, alpha = 1.0, beta = 1.0;
};

/// Runs x through the network prefix up to and including the last residual
/// block, collecting a BlockTerm for every dimension-preserving block.
inline std::vector<BlockTerm> residual_terms(const Network& net, const Tensor& x, bool standard) {
  std::vector<double> h(x.data);
  std::vector<BlockTerm> terms;
  for (const Layer& l : net.layers()) {
    const LayerSpec& s = l.spec;
    if (s.kind == LayerKind::flatten) continue;
    if (s.kind == LayerKind::relu) {
      for (double& v : h) v = std::max(v, 0.0);
      continue;
    }
    if (s.kind == LayerKind::dense) {
      // Only a head after the residual chain is expected here.
      break;
    }
    if (s.kind != LayerKind::residual_block) {
      throw ContractError("residual_bound_check: unsupported layer '" + std::string(to_string(s.kind)) + "'");
    }
    double alpha = 1.0, beta = 1.0;
    if (!standard && s.learns_aggregation()) std::tie(alpha, beta) = ops::convex_pair(l.agg_logits[0], l.agg_logits[1]);
    std::vector<double> pre(h);
    std::vector<char> g1(h.size(), 1);
    if (!s.first) {
      for (std::size_t i = 0; i < pre.size(); ++i) {
        g1[i] = pre[i] > 0.0;
        if (!g1[i]) pre[i] = 0.0;
      }
    }
    const std::size_t hid = s.hidden, in_dim = l.w1.dim(1), w = s.width;
    std::vector<double> z(hid, 0.0);
    for (std::size_t r = 0; r < hid; ++r) {
      double acc = s.has_bias ? l.b1[r] : 0.0;
      for (std::size_t c = 0; c < in_dim; ++c) acc += l.w1.data[r * in_dim + c] * pre[c];
      z[r] = acc;
    }
    std::vector<char> g2(hid);
    for (std::size_t r = 0; r < hid; ++r) {
      g2[r] = z[r] > 0.0;
      if (!g2[r]) z[r] = 0.0;
    }
    std::vector<double> branch(w, 0.0);
    for (std::size_t r = 0; r < w; ++r) {
      double acc = s.has_bias ? l.b2[r] : 0.0;
      for (std::size_t c = 0; c < hid; ++c) acc += l.w2.data[r * hid + c] * z[c];
      branch[r] = acc;
    }
    std::vector<double> shortcut(h);
    if (s.first) {
      shortcut.assign(w, 0.0);
      for (std::size_t r = 0; r < w; ++r)
        for (std::size_t c = 0; c < in_dim; ++c) shortcut[r] += l.w3.data[r * in_dim + c] * h[c];
    }
    if (!s.first) {
      // B = J1 W1^T J2 W2^T, [w x w]: B[i][k] = g1_i sum_m W1[m][i] g2_m W2[k][m].
      BlockTerm t;
      t.s = l.shortcut_scale;
      t.alpha = alpha;
      t.beta = beta;
      t.branch_t = Mat{w, std::vector<double>(w * w, 0.0)};
      for (std::size_t i = 0; i < w; ++i) {
        if (!g1[i]) continue;
        for (std::size_t m = 0; m < hid; ++m) {
          if (!g2[m]) continue;
          const double a = l.w1.data[m * w + i];
          if (a == 0.0) continue;
          for (std::size_t k = 0; k < w; ++k) t.branch_t.a[i * w + k] += a * l.w2.data[k * hid + m];
        }
      }
      terms.push_back(std::move(t));
    }
    h.assign(w, 0.0);
    for (std::size_t i = 0; i < w; ++i) h[i] = l.shortcut_scale * alpha * shortcut[i] + beta * branch[i];
  }
  return terms;
}

}  // namespace analysis_detail

inline constexpr std::size_t kMaxExpansionBlocks = 12;

/// Input-Jacobian structure of a residual chain at x. With
///   T_l = s_l alpha_l I + beta_l J1 W1^T J2 W2^T
/// for each dimension-preserving block, R_L = T_1 T_2 ... T_L is formed
/// directly and as the sum of its 2^L subset terms; sigma is the largest
/// Frobenius norm among the subset products. In standard mode every block is
/// evaluated with alpha = beta = 1. The projecting first block is not part
/// of the chain.
inline ResidualBoundReport residual_bound_check(const Network& net, const Tensor& x, ResidualMode mode) {
  using analysis_detail::Mat;
  if (x.shape != net.input_shape()) throw ShapeError("residual_bound_check: x does not match the input shape");
  const auto terms = analysis_detail::residual_terms(net, x, mode == ResidualMode::standard);
  const std::size_t L = terms.size();
  if (L == 0) throw ContractError("residual_bound_check: no dimension-preserving residual blocks");
  if (L > kMaxExpansionBlocks) {
    throw ContractError("residual_bound_check: " + std::to_string(L) + " blocks exceed the expansion limit of " +
                        std::to_string(kMaxExpansionBlocks));
  }
  const std::size_t w = terms[0].branch_t.n;

  ResidualBoundReport r;
  r.blocks = L;
  r.expansion_terms = std::size_t{1} << L;
  Mat direct = Mat::identity(w);
  for (const auto& t : terms) {
    Mat tl = t.branch_t;
    for (double& v : tl.a) v *= t.beta;
    for (std::size_t i = 0; i < w; ++i) tl.a[i * w + i] += t.s * t.alpha;
    direct = direct * tl;
    r.alpha_beta_product *= t.alpha + t.beta;
    r.multiplier *= t.s * t.alpha + t.beta;
    r.alphas.push_back(t.alpha);
    r.betas.push_back(t.beta);
  }
  r.R_L_norm = direct.frob();

  // Depth-first over subsets so shared prefixes are multiplied once.
  Mat sum{w, std::vector<double>(w * w, 0.0)};
  double sigma = 0.0;
  std::function<void(std::size_t, const Mat&, double, bool)> dfs = [&](std::size_t l, const Mat& prefix, double coeff,
                                                                      bool is_identity) {
    if (l == L) {
      sigma = std::max(sigma, prefix.frob());
      for (std::size_t i = 0; i < sum.a.size(); ++i) sum.a[i] += coeff * prefix.a[i];
      return;
    }
    const auto& t = terms[l];
    dfs(l + 1, prefix, coeff * t.s * t.alpha, is_identity);
    dfs(l + 1, is_identity ? t.branch_t : prefix * t.branch_t, coeff * t.beta, false);
  };
  dfs(0, Mat::identity(w), 1.0, true);
  for (std::size_t i = 0; i < sum.a.size(); ++i)
    r.expansion_max_abs_diff = std::max(r.expansion_max_abs_diff, std::abs(sum.a[i] - direct.a[i]));
  r.sigma = sigma;
  r.ca_bound = r.multiplier * sigma;
  r.standard_bound = static_cast<double>(r.expansion_terms) * sigma;
  r.bound_holds = r.R_L_norm <= r.ca_bound * (1.0 + 1e-12);
  return r;
}

// Histograms ----------------------------------------------------------------------

struct GradNormReport {
  std::vector<double> norms;       ///< per-example ||d L_ce / d x||_2
  std::vector<double> bin_edges;   ///< bins + 1 edges over [0, max norm]
  std::vector<std::size_t> counts;
  std::vector<double> bound_values;  ///< per-logit product-norm bound (dense/ReLU chains)

  void write_csv(std::ostream& os) const {
    os << "bin_lo,bin_hi,count\n";
    os.precision(17);
    for (std::size_t b = 0; b < counts.size(); ++b) os << bin_edges[b] << ',' << bin_edges[b + 1] << ',' << counts[b] << '\n';
  }

  /// Fraction of examples with norm strictly above `threshold`.
  double upper_tail_mass(double threshold) const {
    if (norms.empty()) return 0.0;
    const auto n = std::count_if(norms.begin(), norms.end(), [&](double v) { return v > threshold; });
    return static_cast<double>(n) / static_cast<double>(norms.size());
  }

  /// Nearest-rank percentile, q in [0, 100].
  double percentile(double q) const {
    if (norms.empty()) return 0.0;
    std::vector<double> s(norms);
    std::sort(s.begin(), s.end());
    const double rank = std::ceil(q / 100.0 * static_cast<double>(s.size()));
    const std::size_t idx = rank < 1.0 ? 0 : std::min(s.size() - 1, static_cast<std::size_t>(rank) - 1);
    return s[idx];
  }
};

/// Uniform bins over [0, max]; a value equal to the upper edge lands in the
/// last bin. With all values zero every count lands in the first bin.
inline void histogram(const std::vector<double>& values, std::size_t bins, std::vector<double>& edges,
                      std::vector<std::size_t>& counts) {
  if (bins < 1) throw ContractError("histogram: need at least one bin");
  double hi = 0.0;
  for (double v : values) hi = std::max(hi, v);
  const double width = hi > 0.0 ? hi / static_cast<double>(bins) : 1.0 / static_cast<double>(bins);
  edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) edges[b] = width * static_cast<double>(b);
  if (hi > 0.0) edges[bins] = hi;
  counts.assign(bins, 0);
  for (double v : values) {
    std::size_t b = static_cast<std::size_t>(v / width);
    counts[std::min(b, bins - 1)]++;
  }
}

/// Per-example cross-entropy input-gradient norms over a dataset, binned.
inline GradNormReport grad_norm_histogram(const Network& net, const Dataset& ds, std::size_t bins = 50,
                                          std::size_t batch_size = 500) {
  GradNormReport r;
  r.norms.reserve(ds.size());
  for (std::size_t s = 0; s < ds.size(); s += batch_size) {
    const Batch b = slice(ds, s, batch_size);
    const auto lg = input_gradient_ce(net, b.x, b.labels);
    const std::size_t d = lg.grad.size() / b.labels.size();
    for (std::size_t i = 0; i < b.labels.size(); ++i)
      r.norms.push_back(std::sqrt(sum_squares(std::span<const double>(lg.grad.data.data() + i * d, d))));
  }
  histogram(r.norms, bins, r.bin_edges, r.counts);
  if (is_dense_chain(net)) {
    const std::size_t classes = net.output_shape().back();
    for (std::size_t j = 0; j < classes; ++j) r.bound_values.push_back(gradient_bound(net, j));
  }
  return r;
}

}  // namespace weissi
