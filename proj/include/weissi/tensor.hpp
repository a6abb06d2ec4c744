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
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "weissi/error.hpp"

namespace weissi {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// The gradient is filled by Tape::backward when the tensor is registered on
/// a tape as a trainable leaf and is reachable from the loss.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  std::optional<std::vector<double>> grad;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<double> values)
      : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(v));
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool is_scalar() const noexcept { return data.size() == 1; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }
  double item() const {
    if (data.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape));
    return data[0];
  }

  void zero_grad() { grad.reset(); }
  Tensor reshaped(Shape s) const {
    if (shape_size(s) != data.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape) + " to " + shape_str(s));
    }
    return Tensor(std::move(s), data);
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                     " vs " + shape_str(b.shape));
  }
}

// Plain value arithmetic, no tape involved.

inline double sum_squares(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double frobenius_norm(const Tensor& t) { return std::sqrt(sum_squares(t.data)); }

inline double l1_norm(const Tensor& t) {
  double s = 0.0;
  for (double x : t.data) s += std::abs(x);
  return s;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Tensor scaled(const Tensor& t, double a) {
  Tensor out = t;
  out.grad.reset();
  for (double& x : out.data) x *= a;
  return out;
}

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

// Seeds -------------------------------------------------------------------

/// SplitMix64 finalizer; used to derive independent per-purpose seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class SeedPurpose : std::uint64_t {
  init = 1,
  shuffle = 2,
  attack = 3,
  probe = 4,
  data = 5,
};

inline std::uint64_t derive_seed(std::uint64_t root, SeedPurpose purpose,
                                 std::uint64_t index = 0) {
  return mix_seed(mix_seed(root ^ (static_cast<std::uint64_t>(purpose) << 56)) + index);
}

using Rng = std::mt19937_64;

inline Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& x : t.data) x = dist(rng);
  return t;
}

inline Tensor rand_uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : t.data) x = dist(rng);
  return t;
}

}  // namespace weissi
