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

// Reference implementations used only by the tests and the verify suites.
// They deliberately avoid the library's closed forms and fast paths: plain
// loops, finite differences and iterative minimization.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "weissi/network.hpp"

namespace weissi::testing {

/// max |a - b| / max(max |b|, floor).
inline double rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-300) {
  if (a.size() != b.size()) throw ShapeError("rel_err: size mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / std::max(scale, floor);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Central differences of f with respect to every entry of `x` (modified in
/// place and restored).
inline std::vector<double> central_difference(const std::function<double()>& f, std::vector<double>& x,
                                              double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f();
    x[i] = orig - h;
    const double fm = f();
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Numerical minimum of sum_l g_l * gamma_l^p subject to prod gamma_l = 1.
///
/// Works on u_l = log gamma_l restricted to the hyperplane sum u = 0, taking
/// projected Newton steps (diagonal Hessian plus the constraint multiplier)
/// with backtracking. The objective is convex in u.
struct ShiftMinimum {
  double value = 0.0;
  std::vector<double> gammas;
  std::size_t iterations = 0;
};

inline ShiftMinimum minimize_over_shifts(const std::vector<double>& g, double p, std::size_t max_iter = 200) {
  const std::size_t n = g.size();
  std::vector<double> u(n, 0.0);
  auto objective = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += g[i] * std::exp(p * v[i]);
    return s;
  };
  ShiftMinimum r;
  double f = objective(u);
  for (std::size_t it = 0; it < max_iter; ++it) {
    std::vector<double> grad(n), hess(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = g[i] * std::exp(p * u[i]);
      grad[i] = p * t;
      hess[i] = p * p * t;
    }
    // KKT for min 1/2 d'Hd + grad'd s.t. sum d = 0.
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += grad[i] / hess[i];
      den += 1.0 / hess[i];
    }
    const double nu = -num / den;
    std::vector<double> d(n);
    double decrement = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = -(grad[i] + nu) / hess[i];
      decrement += d[i] * d[i] * hess[i];
    }
    r.iterations = it + 1;
    if (decrement < 1e-30 * std::max(1.0, f)) break;
    double step = 1.0;
    std::vector<double> trial(n);
    for (;;) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = u[i] + step * d[i];
      const double ft = objective(trial);
      if (ft <= f || step < 1e-12) {
        u = trial;
        f = ft;
        break;
      }
      step *= 0.5;
    }
  }
  // Re-center in case of drift, then evaluate.
  const double mean = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(n);
  for (double& v : u) v -= mean;
  r.value = objective(u);
  for (double v : u) r.gammas.push_back(std::exp(v));
  return r;
}

/// Dense matrix [Cout*Ho*Wo x Cin*H*W] of a stride/padding cross-correlation
/// with kernel [k x k x Cin x Cout]: each output unit's row holds the kernel
/// taps at the input positions it reads (zero padding drops taps).
inline Tensor unrolled_conv_matrix(const Tensor& kernel, std::size_t h, std::size_t w, std::size_t stride,
                                   std::size_t pad) {
  const std::size_t k = kernel.dim(0), cin = kernel.dim(2), cout = kernel.dim(3);
  const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
  Tensor m(Shape{cout * ho * wo, cin * h * w});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const std::size_t row = (co * ho + oy) * wo + ox;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx)
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              const std::size_t col = (ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix);
              m.data[row * m.dim(1) + col] += kernel.data[((ky * k + kx) * cin + ci) * cout + co];
            }
      }
  return m;
}

/// y = M x for a row-major matrix.
inline std::vector<double> matvec(const Tensor& m, std::span<const double> x) {
  std::vector<double> y(m.dim(0), 0.0);
  for (std::size_t r = 0; r < m.dim(0); ++r)
    for (std::size_t c = 0; c < m.dim(1); ++c) y[r] += m.data[r * m.dim(1) + c] * x[c];
  return y;
}

/// Plain-loop forward of a dense/ReLU chain on one example.
inline std::vector<double> naive_chain_forward(const Network& net, std::vector<double> h) {
  for (const auto& l : net.layers()) {
    switch (l.spec.kind) {
      case LayerKind::flatten:
        break;
      case LayerKind::relu:
        for (double& v : h) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::dense: {
        std::vector<double> y = matvec(l.weight, h);
        if (l.spec.has_bias)
          for (std::size_t i = 0; i < y.size(); ++i) y[i] += l.bias[i];
        h = std::move(y);
        break;
      }
      default:
        throw ContractError("naive_chain_forward: dense/relu chains only");
    }
  }
  return h;
}

/// Random ReLU MLP with `layers` dense layers, widths in [2, max_width],
/// He-initialized, with small random biases when `bias`.
inline Network random_mlp(Rng& rng, std::size_t layers, std::size_t max_width = 12, bool bias = true) {
  std::uniform_int_distribution<std::size_t> wd(2, max_width);
  std::vector<std::size_t> widths(layers + 1);
  for (auto& w : widths) w = wd(rng);
  Network net = mlp(widths, bias);
  init(net, {}, rng());
  if (bias) {
    std::normal_distribution<double> nd(0.0, 0.1);
    for (auto& l : net.layers())
      if (l.spec.kind == LayerKind::dense)
        for (double& b : l.bias.data) b = nd(rng);
  }
  return net;
}

}  // namespace weissi::testing
