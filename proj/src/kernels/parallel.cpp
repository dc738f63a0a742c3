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

#include "sevit/kernels.hpp"

#include <cstdint>

#ifdef SEVIT_OPENMP
#include <omp.h>
#endif

#include "detail/gemm_impl.hpp"

namespace sevit::kernels {

void gemm_parallel(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
                   std::span<const double> a, std::span<const double> b, std::span<double> c,
                   bool accumulate) {
  detail::check_gemm_spans(m, n, k, a, b, c);
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    detail::gemm_row(trans_a, trans_b, static_cast<std::size_t>(i), m, n, k, a.data(), b.data(),
                     c.data(), accumulate);
  }
}

void inner_products_parallel(std::span<const double> rows, std::size_t dim,
                             std::span<const double> q, std::span<double> out) {
  detail::check_scan_spans(rows, dim, q, out);
  const auto count = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < count; ++i) {
    out[i] = detail::dot(rows.data() + i * dim, q.data(), dim);
  }
}

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate) {
  if (m > 1 && m * n * k >= kGemmParallelThreshold && max_threads() > 1) {
    gemm_parallel(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  } else {
    gemm_serial(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  }
}

void inner_products(std::span<const double> rows, std::size_t dim, std::span<const double> q,
                    std::span<double> out) {
  if (rows.size() >= kScanParallelThreshold && max_threads() > 1) {
    inner_products_parallel(rows, dim, q, out);
  } else {
    inner_products_serial(rows, dim, q, out);
  }
}

int max_threads() {
#ifdef SEVIT_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
#ifdef SEVIT_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

bool openmp_enabled() {
#ifdef SEVIT_OPENMP
  return true;
#else
  return false;
#endif
}

}  // namespace sevit::kernels
