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

#include <cstddef>

#ifdef WEISSI_HAS_CBLAS
#include <cblas.h>
#endif

namespace weissi::blas {

enum class Op { none, trans };

/// Row-major C = alpha * op(A) * op(B) + beta * C.
///
/// op(A) is m x k, op(B) is k x n. With CBLAS available the product is
/// delegated to it; the fallback loops keep a fixed summation order.
inline void gemm(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k,
                 double alpha, const double* a, std::size_t lda, const double* b,
                 std::size_t ldb, double beta, double* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
#ifdef WEISSI_HAS_CBLAS
  cblas_dgemm(CblasRowMajor, op_a == Op::trans ? CblasTrans : CblasNoTrans,
              op_b == Op::trans ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda),
              b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
#else
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (beta == 0.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (k == 0 || alpha == 0.0) return;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = alpha * (op_a == Op::none ? a[i * lda + p] : a[p * lda + i]);
      if (av == 0.0) continue;
      if (op_b == Op::none) {
        const double* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
      }
    }
  }
#endif
}

inline const char* backend_name() {
#ifdef WEISSI_HAS_CBLAS
  return "cblas";
#else
  return "builtin";
#endif
}

}  // namespace weissi::blas
