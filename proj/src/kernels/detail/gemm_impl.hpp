/*
 * Copyright (c) 2026, The sevit authors. All rights reserved.
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
#include <span>
#include <string>

#include "sevit/error.hpp"
#include "sevit/kernels.hpp"

namespace sevit::kernels::detail {

inline void check_gemm_spans(std::size_t m, std::size_t n, std::size_t k,
                             std::span<const double> a, std::span<const double> b,
                             std::span<double> c) {
  if (a.size() != m * k || b.size() != k * n || c.size() != m * n) {
    throw DimensionError("gemm: buffer sizes " + std::to_string(a.size()) + ", " +
                         std::to_string(b.size()) + ", " + std::to_string(c.size()) +
                         " do not match m=" + std::to_string(m) + " n=" + std::to_string(n) +
                         " k=" + std::to_string(k));
  }
}

inline void check_scan_spans(std::span<const double> rows, std::size_t dim,
                             std::span<const double> q, std::span<double> out) {
  if (q.size() != dim || rows.size() != out.size() * dim) {
    throw DimensionError("inner_products: matrix of " + std::to_string(rows.size()) +
                         " values, dim " + std::to_string(dim) + ", query " +
                         std::to_string(q.size()) + ", output " + std::to_string(out.size()));
  }
}

// Four interleaved partial sums, combined in a fixed order.
inline double dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) s0 += x[i] * y[i];
  return (s0 + s2) + (s1 + s3);
}

// One output row of C. The reduction order over k depends only on the
// operand layout, so the serial and parallel drivers agree bit for bit.
inline void gemm_row(Trans trans_a, Trans trans_b, std::size_t i, std::size_t m, std::size_t n,
                     std::size_t k, const double* a, const double* b, double* c,
                     bool accumulate) {
  double* crow = c + i * n;
  if (trans_b == Trans::kYes) {
    // Rows of B are contiguous: one dot product per output.
    if (trans_a == Trans::kNo) {
      const double* arow = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double s = dot(arow, b + j * k, k);
        crow[j] = accumulate ? crow[j] + s : s;
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double s = 0.0;
        for (std::size_t l = 0; l < k; ++l) s += a[l * m + i] * brow[l];
        crow[j] = accumulate ? crow[j] + s : s;
      }
    }
    return;
  }
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
  }
  for (std::size_t l = 0; l < k; ++l) {
    const double av = trans_a == Trans::kYes ? a[l * m + i] : a[i * k + l];
    const double* brow = b + l * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

}  // namespace sevit::kernels::detail
