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

#include "weissi/network.hpp"

namespace weissi {

/// Number of rows (output units) of a weight tensor. Dense weights are
/// [out x in]; conv kernels [k x k x C_in x C_out] have one row per output
/// channel.
inline std::size_t weight_rows(const Tensor& w, LayerKind kind) {
  if (kind == LayerKind::conv2d) return w.shape.back();
  return w.shape.empty() ? 1 : w.shape.front();
}

/// Calls f(row, element) for every entry of a weight tensor.
template <typename F>
void for_each_row_entry(const Tensor& w, LayerKind kind, F&& f) {
  if (kind == LayerKind::conv2d) {
    const std::size_t rows = w.shape.back();
    for (std::size_t i = 0; i < w.size(); ++i) f(i % rows, w[i]);
  } else {
    const std::size_t rows = weight_rows(w, kind);
    const std::size_t cols = rows ? w.size() / rows : 0;
    for (std::size_t i = 0; i < w.size(); ++i) f(i / cols, w[i]);
  }
}

/// ||W||_{p,q} = (sum_rows ||w_row||_p^q)^(1/q).
inline double lpq_norm(const Tensor& w, LayerKind kind, double p, double q) {
  if (p < 1.0 || q < 1.0) throw ContractError("lpq norm requires p, q >= 1");
  std::vector<double> row_p(weight_rows(w, kind), 0.0);
  for_each_row_entry(w, kind, [&](std::size_t r, double x) { row_p[r] += std::pow(std::abs(x), p); });
  double s = 0.0;
  for (double v : row_p) s += std::pow(v, q / p);
  return std::pow(s, 1.0 / q);
}

/// ||W||_{p,q}^q, which avoids the outer root.
inline double lpq_norm_pow_q(const Tensor& w, LayerKind kind, double p, double q) {
  if (p < 1.0 || q < 1.0) throw ContractError("lpq norm requires p, q >= 1");
  std::vector<double> row_p(weight_rows(w, kind), 0.0);
  for_each_row_entry(w, kind, [&](std::size_t r, double x) { row_p[r] += std::pow(std::abs(x), p); });
  double s = 0.0;
  for (double v : row_p) s += std::pow(v, q / p);
  return s;
}

}  // namespace weissi
