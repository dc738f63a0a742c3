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
#include <cstdint>
#include <span>
#include <vector>

#include "sevit/tensor.hpp"

// Differentiable operations. Rank-1 tensors behave as a single row wherever
// an operation is defined on matrices.
namespace sevit::ad {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Same-shape sum, or `b` a single row broadcast over every row of `a` (bias).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);

// Rows of `table` selected by `ids`; result is ids.size() x table.cols().
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);

// Row-wise softmax(x / temperature), max-subtracted.
Tensor softmax(const Tensor& x, double temperature = 1.0);

// Row-wise log(softmax(x / temperature)).
Tensor log_softmax(const Tensor& x, double temperature = 1.0);

// log sum_c exp(x[r, c]) per row, rows x 1.
Tensor logsumexp_rows(const Tensor& x);

// Sum over rows of -log softmax(logits[r])[targets[r]].
Tensor cross_entropy_nll(const Tensor& logits, std::span<const std::size_t> targets);

// out[r] = x[r, cols[r]], returned as a rank-1 tensor of length rows.
Tensor pick(const Tensor& x, std::span<const std::size_t> cols);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Column means, 1 x cols.
Tensor mean_rows(const Tensor& x);

// Each row scaled to unit L2 norm. Zero rows are a numeric-domain error.
Tensor l2_normalize_rows(const Tensor& x);

// Single-head softmax(q k^T / sqrt(d)) v. `allowed` is an optional
// q.rows() x k.rows() mask (nonzero = key visible); every query row needs
// at least one visible key.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::span<const std::uint8_t> allowed = {});

}  // namespace sevit::ad
