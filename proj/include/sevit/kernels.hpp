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

// Dense numeric kernels. Each kernel has a serial reference and an OpenMP
// variant that produces bitwise-identical output (same per-element
// accumulation order; only the outer loop is split across threads).
namespace sevit::kernels {

enum class Trans { kNo, kYes };

// C[m x n] = op(A) . op(B), with op(A) m x k and op(B) k x n. When
// `accumulate` is set the product is added into C instead of overwriting it.
void gemm_serial(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
                 std::span<const double> a, std::span<const double> b, std::span<double> c,
                 bool accumulate = false);
void gemm_parallel(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
                   std::span<const double> a, std::span<const double> b, std::span<double> c,
                   bool accumulate = false);
// Picks the parallel kernel only when the product is large enough to amortize
// thread start-up.
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c,
          bool accumulate = false);

// out[i] = <rows[i, :], q> for a row-major matrix with `dim` columns.
void inner_products_serial(std::span<const double> rows, std::size_t dim,
                           std::span<const double> q, std::span<double> out);
void inner_products_parallel(std::span<const double> rows, std::size_t dim,
                             std::span<const double> q, std::span<double> out);
void inner_products(std::span<const double> rows, std::size_t dim, std::span<const double> q,
                    std::span<double> out);

// Work thresholds (multiply-adds) above which the dispatchers go parallel.
inline constexpr std::size_t kGemmParallelThreshold = std::size_t{1} << 18;
inline constexpr std::size_t kScanParallelThreshold = std::size_t{1} << 16;

int max_threads();
void set_num_threads(int n);
bool openmp_enabled();

}  // namespace sevit::kernels
