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

#include "detail/gemm_impl.hpp"
#include "sevit/error.hpp"

namespace sevit::kernels {

void gemm_serial(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
                 std::span<const double> a, std::span<const double> b, std::span<double> c,
                 bool accumulate) {
  detail::check_gemm_spans(m, n, k, a, b, c);
  for (std::size_t i = 0; i < m; ++i) {
    detail::gemm_row(trans_a, trans_b, i, m, n, k, a.data(), b.data(), c.data(), accumulate);
  }
}

void inner_products_serial(std::span<const double> rows, std::size_t dim,
                           std::span<const double> q, std::span<double> out) {
  detail::check_scan_spans(rows, dim, q, out);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = detail::dot(rows.data() + i * dim, q.data(), dim);
  }
}

}  // namespace sevit::kernels
