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
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weissi/autodiff.hpp"
#include "weissi/blas.hpp"

namespace weissi::ops {

namespace detail {

inline Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape;
}

template <typename Fwd, typename Dfdx>
Var unary(Var a, const char* name, Fwd fwd, Dfdx dfdx) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  const std::size_t ia = a.id;
  return t.record(std::move(out), {ia},
                  [ia, dfdx](Tape& tp, std::size_t self, const std::vector<double>& g) {
                    if (!tp.requires_grad(ia)) return;
                    const Tensor& xv = tp.value(ia);
                    const Tensor& yv = tp.value(self);
                    auto& da = tp.adjoint(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * dfdx(xv[i], yv[i]);
                  },
                  name);
}

}  // namespace detail

// Elementwise -------------------------------------------------------------

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.grad.reset();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t, const std::vector<double>& g) {
                    for (std::size_t p : {ia, ib}) {
                      if (!tp.requires_grad(p)) continue;
                      auto& d = tp.adjoint(p);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                    }
                  },
                  "add");
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.grad.reset();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t, const std::vector<double>& g) {
                    if (tp.requires_grad(ia)) {
                      auto& d = tp.adjoint(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                    }
                    if (tp.requires_grad(ib)) {
                      auto& d = tp.adjoint(ib);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
                    }
                  },
                  "sub");
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out(a.value().shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t, const std::vector<double>& g) {
                    const Tensor& av = tp.value(ia);
                    const Tensor& bv = tp.value(ib);
                    if (tp.requires_grad(ia)) {
                      auto& d = tp.adjoint(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
                    }
                    if (tp.requires_grad(ib)) {
                      auto& d = tp.adjoint(ib);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
                    }
                  },
                  "mul");
}

inline Var div(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "div");
  require_same_shape(a.value(), b.value(), "div");
  Tensor out(a.value().shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t self, const std::vector<double>& g) {
                    const Tensor& bv = tp.value(ib);
                    const Tensor& y = tp.value(self);
                    if (tp.requires_grad(ia)) {
                      auto& d = tp.adjoint(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] / bv[i];
                    }
                    if (tp.requires_grad(ib)) {
                      auto& d = tp.adjoint(ib);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i] * y[i] / bv[i];
                    }
                  },
                  "div");
}

/// a * c for a constant c.
inline Var scale(Var a, double c) {
  return detail::unary(a, "scale", [c](double x) { return c * x; },
                       [c](double, double) { return c; });
}

inline Var add_scalar(Var a, double c) {
  return detail::unary(a, "add_scalar", [c](double x) { return x + c; },
                       [](double, double) { return 1.0; });
}

/// Tensor times a scalar node.
inline Var mul_scalar(Var a, Var s) {
  Tape& t = detail::same_tape(a, s, "mul_scalar");
  if (s.value().size() != 1) throw ShapeError("mul_scalar: second operand must be scalar");
  const double sv = s.value()[0];
  Tensor out(a.value().shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * sv;
  const std::size_t ia = a.id, is = s.id;
  return t.record(std::move(out), {ia, is},
                  [ia, is](Tape& tp, std::size_t, const std::vector<double>& g) {
                    const Tensor& av = tp.value(ia);
                    const double sv2 = tp.value(is)[0];
                    if (tp.requires_grad(ia)) {
                      auto& d = tp.adjoint(ia);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * sv2;
                    }
                    if (tp.requires_grad(is)) {
                      double acc = 0.0;
                      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
                      tp.adjoint(is)[0] += acc;
                    }
                  },
                  "mul_scalar");
}

/// max(0, x); the gate at exactly zero is 0.
inline Var relu(Var a) {
  return detail::unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

/// |x| with subgradient 0 at 0.
inline Var abs(Var a) {
  return detail::unary(a, "abs", [](double x) { return std::abs(x); },
                       [](double x, double) { return sign(x); });
}

inline Var square(Var a) {
  return detail::unary(a, "square", [](double x) { return x * x; },
                       [](double x, double) { return 2.0 * x; });
}

inline Var sqrt(Var a) {
  return detail::unary(a, "sqrt", [](double x) { return std::sqrt(x); },
                       [](double, double y) { return 0.5 / y; });
}

inline Var log(Var a) {
  return detail::unary(a, "log", [](double x) { return std::log(x); },
                       [](double x, double) { return 1.0 / x; });
}

inline Var exp(Var a) {
  return detail::unary(a, "exp", [](double x) { return std::exp(x); },
                       [](double, double y) { return y; });
}

inline Var tanh(Var a) {
  return detail::unary(a, "tanh", [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

// Reductions and views ----------------------------------------------------

inline Var sum(Var a) {
  Tape& t = *a.tape;
  double s = 0.0;
  for (double x : a.value().data) s += x;
  const std::size_t ia = a.id;
  return t.record(Tensor::scalar(s), {ia},
                  [ia](Tape& tp, std::size_t, const std::vector<double>& g) {
                    if (!tp.requires_grad(ia)) return;
                    auto& d = tp.adjoint(ia);
                    for (double& x : d) x += g[0];
                  },
                  "sum");
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

inline Var reshape(Var a, Shape shape) {
  Tape& t = *a.tape;
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id;
  return t.record(std::move(out), {ia},
                  [ia](Tape& tp, std::size_t, const std::vector<double>& g) {
                    if (!tp.requires_grad(ia)) return;
                    auto& d = tp.adjoint(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                  },
                  "reshape");
}

/// Sum over the batch of column j of a [N x P] matrix (or element j of a
/// vector). The input gradient of this scalar holds, per example, the
/// gradient of logit j.
inline Var select_logit(Var logits, std::size_t j) {
  Tape& t = *logits.tape;
  const Tensor& z = logits.value();
  const std::size_t p = z.shape.empty() ? 1 : z.shape.back();
  if (j >= p) throw ContractError("select_logit: index " + std::to_string(j) + " out of range");
  const std::size_t n = z.size() / p;
  double s = 0.0;
  for (std::size_t r = 0; r < n; ++r) s += z[r * p + j];
  const std::size_t iz = logits.id;
  return t.record(Tensor::scalar(s), {iz},
                  [iz, j, n, p](Tape& tp, std::size_t, const std::vector<double>& g) {
                    if (!tp.requires_grad(iz)) return;
                    auto& d = tp.adjoint(iz);
                    for (std::size_t r = 0; r < n; ++r) d[r * p + j] += g[0];
                  },
                  "select_logit");
}

// Dense algebra -------------------------------------------------------------

/// [m x k] * [k x n].
inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape) + " and " +
                     shape_str(bv.shape));
  }
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor out(Shape{m, n});
  blas::gemm(blas::Op::none, blas::Op::none, m, n, k, 1.0, av.data.data(), k, bv.data.data(), n,
             0.0, out.data.data(), n);
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib},
                  [ia, ib, m, k, n](Tape& tp, std::size_t, const std::vector<double>& g) {
                    const Tensor& av2 = tp.value(ia);
                    const Tensor& bv2 = tp.value(ib);
                    if (tp.requires_grad(ia)) {
                      // dA += G * B^T
                      blas::gemm(blas::Op::none, blas::Op::trans, m, k, n, 1.0, g.data(), n,
                                 bv2.data.data(), n, 1.0, tp.adjoint(ia).data(), k);
                    }
                    if (tp.requires_grad(ib)) {
                      // dB += A^T * G
                      blas::gemm(blas::Op::trans, blas::Op::none, k, n, m, 1.0, av2.data.data(),
                                 k, g.data(), n, 1.0, tp.adjoint(ib).data(), n);
                    }
                  },
                  "matmul");
}

/// Affine map of a batch: x [N x in], weight [out x in], bias [out].
/// Returns x * weight^T + bias, i.e. W h + b applied to each row.
inline Var linear(Var x, Var weight, std::optional<Var> bias = std::nullopt) {
  Tape& t = detail::same_tape(x, weight, "linear");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.shape[1] != wv.shape[1]) {
    throw ShapeError("linear: input " + shape_str(xv.shape) + " incompatible with weight " +
                     shape_str(wv.shape));
  }
  const std::size_t n = xv.shape[0], in = xv.shape[1], out_dim = wv.shape[0];
  Tensor out(Shape{n, out_dim});
  if (bias) {
    const Tensor& bv = bias->value();
    if (bv.size() != out_dim) throw ShapeError("linear: bias length mismatch");
    for (std::size_t r = 0; r < n; ++r)
      std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + r * out_dim);
  }
  blas::gemm(blas::Op::none, blas::Op::trans, n, out_dim, in, 1.0, xv.data.data(), in,
             wv.data.data(), in, bias ? 1.0 : 0.0, out.data.data(), out_dim);
  std::vector<std::size_t> parents{x.id, weight.id};
  if (bias) parents.push_back(bias->id);
  const std::size_t ix = x.id, iw = weight.id;
  const std::optional<std::size_t> ib = bias ? std::optional<std::size_t>(bias->id) : std::nullopt;
  return t.record(
      std::move(out), std::move(parents),
      [ix, iw, ib, n, in, out_dim](Tape& tp, std::size_t, const std::vector<double>& g) {
        if (tp.requires_grad(ix)) {
          // dX += G * W
          blas::gemm(blas::Op::none, blas::Op::none, n, in, out_dim, 1.0, g.data(), out_dim,
                     tp.value(iw).data.data(), in, 1.0, tp.adjoint(ix).data(), in);
        }
        if (tp.requires_grad(iw)) {
          // dW += G^T * X
          blas::gemm(blas::Op::trans, blas::Op::none, out_dim, in, n, 1.0, g.data(), out_dim,
                     tp.value(ix).data.data(), in, 1.0, tp.adjoint(iw).data(), in);
        }
        if (ib && tp.requires_grad(*ib)) {
          auto& db = tp.adjoint(*ib);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < out_dim; ++c) db[c] += g[r * out_dim + c];
        }
      },
      "linear");
}

// Convolution and pooling ----------------------------------------------------

struct ConvGeometry {
  std::size_t batch, in_c, h, w, k, out_c, stride, pad, out_h, out_w;
  std::size_t patch() const { return k * k * in_c; }
  std::size_t positions() const { return out_h * out_w; }
};

/// Geometry of a cross-correlation; the kernel layout is [k x k x C_in x C_out].
inline ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride,
                                  std::size_t pad) {
  if (input.size() != 4) throw ShapeError("conv2d: input must be [N x C x H x W]");
  if (kernel.size() != 4 || kernel[0] != kernel[1]) {
    throw ShapeError("conv2d: kernel must be [k x k x C_in x C_out], got " + shape_str(kernel));
  }
  const std::size_t k = kernel[0];
  if (k % 2 == 0) throw ContractError("conv2d: kernel size must be odd");
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  if (kernel[2] != input[1]) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel[2]) +
                     " input channels, input has " + std::to_string(input[1]));
  }
  const std::size_t ph = input[2] + 2 * pad, pw = input[3] + 2 * pad;
  if (k > ph || k > pw) throw ShapeError("conv2d: kernel larger than padded input");
  return ConvGeometry{input[0], input[1], input[2], input[3], k, kernel[3], stride, pad,
                      (ph - k) / stride + 1, (pw - k) / stride + 1};
}

namespace detail {

// col is [patch x positions]; row r = (ky * k + kx) * C_in + c.
inline void im2col(const ConvGeometry& g, const double* image, double* col) {
  const std::size_t pos = g.positions();
  for (std::size_t ky = 0; ky < g.k; ++ky)
    for (std::size_t kx = 0; kx < g.k; ++kx)
      for (std::size_t c = 0; c < g.in_c; ++c) {
        double* row = col + ((ky * g.k + kx) * g.in_c + c) * pos;
        const double* plane = image + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                                ix < static_cast<long>(g.w);
            row[oy * g.out_w + ox] = inside ? plane[iy * g.w + ix] : 0.0;
          }
        }
      }
}

inline void col2im_add(const ConvGeometry& g, const double* col, double* image) {
  const std::size_t pos = g.positions();
  for (std::size_t ky = 0; ky < g.k; ++ky)
    for (std::size_t kx = 0; kx < g.k; ++kx)
      for (std::size_t c = 0; c < g.in_c; ++c) {
        const double* row = col + ((ky * g.k + kx) * g.in_c + c) * pos;
        double* plane = image + c * g.h * g.w;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            plane[iy * g.w + ix] += row[oy * g.out_w + ox];
          }
        }
      }
}

}  // namespace detail

/// Cross-correlation of a batch [N x C_in x H x W] (or a single image
/// [C_in x H x W]) with a kernel [k x k x C_in x C_out].
inline Var conv2d(Var input, Var kernel, std::optional<Var> bias, std::size_t stride,
                  std::size_t pad) {
  Tape& t = detail::same_tape(input, kernel, "conv2d");
  const bool single = input.value().rank() == 3;
  if (single) {
    Shape s = input.value().shape;
    s.insert(s.begin(), 1);
    input = reshape(input, s);
  }
  const Tensor& xv = input.value();
  const Tensor& kv = kernel.value();
  const ConvGeometry g = conv_geometry(xv.shape, kv.shape, stride, pad);
  if (bias && bias->value().size() != g.out_c) throw ShapeError("conv2d: bias length mismatch");

  const std::size_t in_sz = g.in_c * g.h * g.w, out_sz = g.out_c * g.positions();
  Tensor out(Shape{g.batch, g.out_c, g.out_h, g.out_w});
  std::vector<double> col(g.patch() * g.positions());
  for (std::size_t n = 0; n < g.batch; ++n) {
    detail::im2col(g, xv.data.data() + n * in_sz, col.data());
    double* o = out.data.data() + n * out_sz;
    blas::gemm(blas::Op::trans, blas::Op::none, g.out_c, g.positions(), g.patch(), 1.0,
               kv.data.data(), g.out_c, col.data(), g.positions(), 0.0, o, g.positions());
    if (bias) {
      const Tensor& bv = bias->value();
      for (std::size_t c = 0; c < g.out_c; ++c)
        for (std::size_t p = 0; p < g.positions(); ++p) o[c * g.positions() + p] += bv[c];
    }
  }
  std::vector<std::size_t> parents{input.id, kernel.id};
  if (bias) parents.push_back(bias->id);
  const std::size_t ix = input.id, ik = kernel.id;
  const std::optional<std::size_t> ib = bias ? std::optional<std::size_t>(bias->id) : std::nullopt;
  Var result = t.record(
      std::move(out), std::move(parents),
      [ix, ik, ib, g, in_sz, out_sz](Tape& tp, std::size_t, const std::vector<double>& grad) {
        const Tensor& x2 = tp.value(ix);
        const Tensor& k2 = tp.value(ik);
        std::vector<double> c(g.patch() * g.positions());
        for (std::size_t n = 0; n < g.batch; ++n) {
          const double* gn = grad.data() + n * out_sz;
          if (tp.requires_grad(ik)) {
            detail::im2col(g, x2.data.data() + n * in_sz, c.data());
            blas::gemm(blas::Op::none, blas::Op::trans, g.patch(), g.out_c, g.positions(), 1.0,
                       c.data(), g.positions(), gn, g.positions(), 1.0, tp.adjoint(ik).data(),
                       g.out_c);
          }
          if (tp.requires_grad(ix)) {
            blas::gemm(blas::Op::none, blas::Op::none, g.patch(), g.positions(), g.out_c, 1.0,
                       k2.data.data(), g.out_c, gn, g.positions(), 0.0, c.data(), g.positions());
            detail::col2im_add(g, c.data(), tp.adjoint(ix).data() + n * in_sz);
          }
          if (ib && tp.requires_grad(*ib)) {
            auto& db = tp.adjoint(*ib);
            for (std::size_t ch = 0; ch < g.out_c; ++ch)
              for (std::size_t p = 0; p < g.positions(); ++p) db[ch] += gn[ch * g.positions() + p];
          }
        }
      },
      "conv2d");
  if (single) result = reshape(result, Shape{g.out_c, g.out_h, g.out_w});
  return result;
}

namespace detail {

struct PoolGeometry {
  std::size_t planes, h, w, window, stride, out_h, out_w;
};

inline PoolGeometry pool_geometry(const Shape& s, std::size_t window, std::size_t stride,
                                  const char* op) {
  if (s.size() < 2) throw ShapeError(std::string(op) + ": input needs spatial dims");
  if (window < 1 || stride < 1) throw ContractError(std::string(op) + ": window and stride must be >= 1");
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (window > h || window > w) throw ShapeError(std::string(op) + ": window larger than input");
  std::size_t planes = 1;
  for (std::size_t i = 0; i + 2 < s.size(); ++i) planes *= s[i];
  return PoolGeometry{planes, h, w, window, stride, (h - window) / stride + 1,
                      (w - window) / stride + 1};
}

inline Shape pooled_shape(Shape s, const PoolGeometry& g) {
  s[s.size() - 2] = g.out_h;
  s[s.size() - 1] = g.out_w;
  return s;
}

}  // namespace detail

/// Window maximum over the last two dims. Ties go to the first element in
/// row-major order within the window.
inline Var maxpool2d(Var a, std::size_t window, std::size_t stride) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  const auto g = detail::pool_geometry(x.shape, window, stride, "maxpool2d");
  Tensor out(detail::pooled_shape(x.shape, g));
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < g.planes; ++p) {
    const std::size_t base = p * g.h * g.w;
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        std::size_t best = base + (oy * g.stride) * g.w + ox * g.stride;
        for (std::size_t dy = 0; dy < g.window; ++dy)
          for (std::size_t dx = 0; dx < g.window; ++dx) {
            const std::size_t idx = base + (oy * g.stride + dy) * g.w + ox * g.stride + dx;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (p * g.out_h + oy) * g.out_w + ox;
        out[o] = x[best];
        argmax[o] = best;
      }
  }
  const std::size_t ia = a.id;
  return t.record(std::move(out), {ia},
                  [ia, argmax = std::move(argmax)](Tape& tp, std::size_t,
                                                   const std::vector<double>& grad) {
                    if (!tp.requires_grad(ia)) return;
                    auto& d = tp.adjoint(ia);
                    for (std::size_t o = 0; o < grad.size(); ++o) d[argmax[o]] += grad[o];
                  },
                  "maxpool2d");
}

inline Var avgpool2d(Var a, std::size_t window, std::size_t stride) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  const auto g = detail::pool_geometry(x.shape, window, stride, "avgpool2d");
  Tensor out(detail::pooled_shape(x.shape, g));
  const double inv = 1.0 / static_cast<double>(g.window * g.window);
  for (std::size_t p = 0; p < g.planes; ++p)
    for (std::size_t oy = 0; oy < g.out_h; ++oy)
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < g.window; ++dy)
          for (std::size_t dx = 0; dx < g.window; ++dx)
            s += x[p * g.h * g.w + (oy * g.stride + dy) * g.w + ox * g.stride + dx];
        out[(p * g.out_h + oy) * g.out_w + ox] = s * inv;
      }
  const std::size_t ia = a.id;
  return t.record(std::move(out), {ia},
                  [ia, g, inv](Tape& tp, std::size_t, const std::vector<double>& grad) {
                    if (!tp.requires_grad(ia)) return;
                    auto& d = tp.adjoint(ia);
                    for (std::size_t p = 0; p < g.planes; ++p)
                      for (std::size_t oy = 0; oy < g.out_h; ++oy)
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                          const double gv = grad[(p * g.out_h + oy) * g.out_w + ox] * inv;
                          for (std::size_t dy = 0; dy < g.window; ++dy)
                            for (std::size_t dx = 0; dx < g.window; ++dx)
                              d[p * g.h * g.w + (oy * g.stride + dy) * g.w + ox * g.stride + dx] += gv;
                        }
                  },
                  "avgpool2d");
}

// Losses ---------------------------------------------------------------------

namespace detail {

inline double log_softmax_row(const double* z, std::size_t p, double* probs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < p; ++j) mx = std::max(mx, z[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    probs[j] = std::exp(z[j] - mx);
    s += probs[j];
  }
  for (std::size_t j = 0; j < p; ++j) probs[j] /= s;
  return mx + std::log(s);
}

}  // namespace detail

/// Mean over the batch of -log softmax(logits)[label]. Accepts [N x P]
/// logits with N labels, or a single [P] logit vector with one label.
inline Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = *logits.tape;
  const Tensor& z = logits.value();
  if (z.rank() != 1 && z.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be [P] or [N x P]");
  const std::size_t p = z.shape.back();
  const std::size_t n = z.rank() == 2 ? z.shape[0] : 1;
  if (labels.size() != n) throw ShapeError("softmax_cross_entropy: label count mismatch");
  std::vector<double> probs(n * p);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= p) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                          " out of range [0, " + std::to_string(p) + ")");
    }
    const double lse = detail::log_softmax_row(z.data.data() + r * p, p, probs.data() + r * p);
    loss += lse - z[r * p + labels[r]];
  }
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  const std::size_t iz = logits.id;
  return t.record(Tensor::scalar(loss), {iz},
                  [iz, n, p, probs = std::move(probs), lab = std::move(lab)](
                      Tape& tp, std::size_t, const std::vector<double>& g) {
                    if (!tp.requires_grad(iz)) return;
                    auto& d = tp.adjoint(iz);
                    const double w = g[0] / static_cast<double>(n);
                    for (std::size_t r = 0; r < n; ++r) {
                      for (std::size_t j = 0; j < p; ++j) d[r * p + j] += w * probs[r * p + j];
                      d[r * p + lab[r]] -= w;
                    }
                  },
                  "softmax_cross_entropy");
}

inline Var softmax_cross_entropy(Var logits, int label) {
  return softmax_cross_entropy(logits, std::span<const int>(&label, 1));
}

// Residual aggregation ---------------------------------------------------------

/// Convex pair from two logits: alpha = exp(la) / (exp(la) + exp(lb)),
/// beta = 1 - alpha.
inline std::pair<double, double> convex_pair(double la, double lb) {
  const double d = la - lb;
  const double alpha = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
  return {alpha, 1.0 - alpha};
}

/// scale * alpha * shortcut + beta * branch, where (alpha, beta) come from the
/// learnable logits [la, lb].
inline Var aggregate_convex(Var shortcut, Var branch, Var logits, double shortcut_scale) {
  Tape& t = detail::same_tape(shortcut, branch, "aggregate_convex");
  require_same_shape(shortcut.value(), branch.value(), "aggregate_convex");
  if (logits.value().size() != 2) throw ShapeError("aggregate_convex: logits must have 2 entries");
  const auto [alpha, beta] = convex_pair(logits.value()[0], logits.value()[1]);
  const Tensor& s = shortcut.value();
  const Tensor& b = branch.value();
  Tensor out(s.shape);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = shortcut_scale * alpha * s[i] + beta * b[i];
  const std::size_t is = shortcut.id, ibr = branch.id, il = logits.id;
  const double a = alpha, be = beta, sc = shortcut_scale;
  return t.record(std::move(out), {is, ibr, il},
                  [is, ibr, il, a, be, sc](Tape& tp, std::size_t, const std::vector<double>& g) {
                    const Tensor& sv = tp.value(is);
                    const Tensor& bv = tp.value(ibr);
                    if (tp.requires_grad(is)) {
                      auto& d = tp.adjoint(is);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += sc * a * g[i];
                    }
                    if (tp.requires_grad(ibr)) {
                      auto& d = tp.adjoint(ibr);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += be * g[i];
                    }
                    if (tp.requires_grad(il)) {
                      double dalpha = 0.0;
                      for (std::size_t i = 0; i < g.size(); ++i) dalpha += g[i] * (sc * sv[i] - bv[i]);
                      const double ds = a * (1.0 - a);
                      auto& d = tp.adjoint(il);
                      d[0] += dalpha * ds;
                      d[1] -= dalpha * ds;
                    }
                  },
                  "aggregate_convex");
}

/// alpha * shortcut + beta * branch with fixed coefficients.
inline Var aggregate_fixed(Var shortcut, Var branch, double alpha, double beta) {
  Tape& t = detail::same_tape(shortcut, branch, "aggregate_fixed");
  require_same_shape(shortcut.value(), branch.value(), "aggregate_fixed");
  const Tensor& s = shortcut.value();
  const Tensor& b = branch.value();
  Tensor out(s.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * s[i] + beta * b[i];
  const std::size_t is = shortcut.id, ibr = branch.id;
  return t.record(std::move(out), {is, ibr},
                  [is, ibr, alpha, beta](Tape& tp, std::size_t, const std::vector<double>& g) {
                    if (tp.requires_grad(is)) {
                      auto& d = tp.adjoint(is);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += alpha * g[i];
                    }
                    if (tp.requires_grad(ibr)) {
                      auto& d = tp.adjoint(ibr);
                      for (std::size_t i = 0; i < g.size(); ++i) d[i] += beta * g[i];
                    }
                  },
                  "aggregate_fixed");
}

}  // namespace weissi::ops
