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

#include "sevit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sevit/error.hpp"
#include "sevit/kernels.hpp"

namespace sevit::ad {
namespace {

using detail::Node;
using kernels::Trans;
using NodePtr = std::shared_ptr<Node>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void check_finite([[maybe_unused]] const char* op, [[maybe_unused]] const Tensor& out) {
#ifndef NDEBUG
  for (double v : out.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output");
  }
#endif
}

Tensor finish(const char* op, const Tensor& out, bool track, Tape::BackwardFn fn) {
  check_finite(op, out);
  if (track) Tape::active()->record(op, out, std::move(fn));
  return out;
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const bool track = tracking({&a, &b});
  auto out = make_tensor({m, n}, std::vector<double>(m * n), track);
  kernels::gemm(Trans::kNo, Trans::kNo, m, n, k, a.data(), b.data(), out.mutable_data());
  NodePtr an = a.node(), bn = b.node();
  return finish("matmul", out, track, [an, bn, m, n, k](const Node& o) {
    if (an->requires_grad) {
      kernels::gemm(Trans::kNo, Trans::kYes, m, k, n, o.grad, bn->value, an->ensure_grad(), true);
    }
    if (bn->requires_grad) {
      kernels::gemm(Trans::kYes, Trans::kNo, k, n, m, an->value, o.grad, bn->ensure_grad(), true);
    }
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  const bool track = tracking({&a});
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = a.at(i, j);
  auto out = make_tensor({c, r}, std::move(v), track);
  NodePtr an = a.node();
  return finish("transpose", out, track, [an, r, c](const Node& o) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool bias = !same && b.rows() == 1 && b.cols() == a.cols() && b.size() == a.cols();
  if (!same && !bias) {
    throw DimensionError("add: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " are not compatible");
  }
  const bool track = tracking({&a, &b});
  const std::size_t cols = a.cols();
  std::vector<double> v(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += same ? bd[i] : bd[i % cols];
  auto out = make_tensor(a.shape(), std::move(v), track);
  NodePtr an = a.node(), bn = b.node();
  return finish("add", out, track, [an, bn, same, cols](const Node& o) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[same ? i : i % cols] += o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
  const bool track = tracking({&a, &b});
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) * b.at(i);
  auto out = make_tensor(a.shape(), std::move(v), track);
  NodePtr an = a.node(), bn = b.node();
  return finish("mul", out, track, [an, bn](const Node& o) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  const bool track = tracking({&a});
  std::vector<double> v(a.data().begin(), a.data().end());
  for (auto& x : v) x *= factor;
  auto out = make_tensor(a.shape(), std::move(v), track);
  NodePtr an = a.node();
  return finish("scale", out, track, [an, factor](const Node& o) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
  });
}

Tensor relu(const Tensor& a) {
  const bool track = tracking({&a});
  std::vector<double> v(a.data().begin(), a.data().end());
  for (auto& x : v) x = x > 0.0 ? x : 0.0;
  auto out = make_tensor(a.shape(), std::move(v), track);
  NodePtr an = a.node();
  return finish("relu", out, track, [an](const Node& o) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (an->value[i] > 0.0) g[i] += o.grad[i];
    }
  });
}

Tensor log(const Tensor& a) {
  const bool track = tracking({&a});
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(a.at(i) > 0.0)) {
      throw NumericDomainError("log: non-positive input " + std::to_string(a.at(i)));
    }
    v[i] = std::log(a.at(i));
  }
  auto out = make_tensor(a.shape(), std::move(v), track);
  NodePtr an = a.node();
  return finish("log", out, track, [an](const Node& o) {
    auto& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / an->value[i];
  });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank2("embedding", table);
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<double> v(ids.size() * d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= vocab) {
      throw IndexError("embedding: token id " + std::to_string(ids[r]) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d,
                v.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  const bool track = tracking({&table});
  auto out = make_tensor({ids.size(), d}, std::move(v), track);
  NodePtr tn = table.node();
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return finish("embedding", out, track, [tn, idv = std::move(idv), d](const Node& o) {
    auto& g = tn->ensure_grad();
    for (std::size_t r = 0; r < idv.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) g[idv[r] * d + j] += o.grad[r * d + j];
  });
}

Tensor softmax(const Tensor& x, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("softmax: temperature must be positive, got " +
                         std::to_string(temperature));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  if (cols == 0) throw DimensionError("softmax: empty rows");
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double* out = y.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp((in[c] - mx) / temperature);
      z += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= z;
  }
  const bool track = tracking({&x});
  auto out = make_tensor(x.shape(), std::move(y), track);
  NodePtr xn = x.node();
  return finish("softmax", out, track, [xn, rows, cols, temperature](const Node& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yv = o.value.data() + r * cols;
      const double* gy = o.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += yv[c] * gy[c];
      for (std::size_t c = 0; c < cols; ++c) {
        g[r * cols + c] += yv[c] * (gy[c] - dot) / temperature;
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("log_softmax: temperature must be positive, got " +
                         std::to_string(temperature));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  if (cols == 0) throw DimensionError("log_softmax: empty rows");
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double* out = y.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp((in[c] - mx) / temperature);
    const double lz = std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[c] = (in[c] - mx) / temperature - lz;
  }
  const bool track = tracking({&x});
  auto out = make_tensor(x.shape(), std::move(y), track);
  NodePtr xn = x.node();
  return finish("log_softmax", out, track, [xn, rows, cols, temperature](const Node& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yv = o.value.data() + r * cols;
      const double* gy = o.grad.data() + r * cols;
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += gy[c];
      for (std::size_t c = 0; c < cols; ++c) {
        g[r * cols + c] += (gy[c] - std::exp(yv[c]) * total) / temperature;
      }
    }
  });
}

Tensor logsumexp_rows(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (cols == 0) throw DimensionError("logsumexp_rows: empty rows");
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    if (!std::isfinite(mx)) {
      y[r] = mx;
      continue;
    }
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(in[c] - mx);
    y[r] = mx + std::log(z);
  }
  const bool track = tracking({&x});
  auto out = make_tensor({rows, 1}, std::move(y), track);
  NodePtr xn = x.node();
  return finish("logsumexp_rows", out, track, [xn, rows, cols](const Node& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        g[r * cols + c] += o.grad[r] * std::exp(xn->value[r * cols + c] - o.value[r]);
      }
    }
  });
}

Tensor cross_entropy_nll(const Tensor& logits, std::span<const std::size_t> targets) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy_nll: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(rows) + " rows");
  }
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) {
      throw IndexError("cross_entropy_nll: target " + std::to_string(targets[r]) +
                       " outside vocabulary of " + std::to_string(cols));
    }
    const double* in = logits.data().data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(in[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] = std::exp(in[c] - lse);
    loss += lse - in[targets[r]];
  }
  const bool track = tracking({&logits});
  auto out = make_tensor({}, {loss}, track);
  NodePtr ln = logits.node();
  std::vector<std::size_t> tv(targets.begin(), targets.end());
  return finish("cross_entropy_nll", out, track,
                [ln, probs = std::move(probs), tv = std::move(tv), cols](const Node& o) {
                  auto& g = ln->ensure_grad();
                  const double go = o.grad[0];
                  for (std::size_t r = 0; r < tv.size(); ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                      g[r * cols + c] += go * (probs[r * cols + c] - (c == tv[r] ? 1.0 : 0.0));
                    }
                  }
                });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> cols_idx) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (cols_idx.size() != rows) {
    throw DimensionError("pick: " + std::to_string(cols_idx.size()) + " indices for " +
                         std::to_string(rows) + " rows");
  }
  std::vector<double> v(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (cols_idx[r] >= cols) {
      throw IndexError("pick: column " + std::to_string(cols_idx[r]) + " out of range " +
                       std::to_string(cols));
    }
    v[r] = x.at(r, cols_idx[r]);
  }
  const bool track = tracking({&x});
  auto out = make_tensor({rows}, std::move(v), track);
  NodePtr xn = x.node();
  std::vector<std::size_t> iv(cols_idx.begin(), cols_idx.end());
  return finish("pick", out, track, [xn, iv = std::move(iv), cols](const Node& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t r = 0; r < iv.size(); ++r) g[r * cols + iv[r]] += o.grad[r];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column counts differ, " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    }
    rows += p.rows();
    track = track || tracking({&p});
  }
  std::vector<double> v;
  v.reserve(rows * cols);
  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) {
    v.insert(v.end(), p.data().begin(), p.data().end());
    nodes.push_back(p.node());
  }
  auto out = make_tensor({rows, cols}, std::move(v), track);
  return finish("concat_rows", out, track, [nodes = std::move(nodes)](const Node& o) {
    std::size_t offset = 0;
    for (const auto& n : nodes) {
      if (n->requires_grad) {
        auto& g = n->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[offset + i];
      }
      offset += n->value.size();
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin > end || end > rows) {
    throw IndexError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of " + std::to_string(rows) + " rows");
  }
  const bool track = tracking({&x});
  std::vector<double> v(x.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                        x.data().begin() + static_cast<std::ptrdiff_t>(end * cols));
  auto out = make_tensor({end - begin, cols}, std::move(v), track);
  NodePtr xn = x.node();
  return finish("slice_rows", out, track, [xn, begin, cols](const Node& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * cols + i] += o.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const bool track = tracking({&x});
  auto out = make_tensor({}, {s}, track);
  NodePtr xn = x.node();
  return finish("sum", out, track, [xn](const Node& o) {
    auto& g = xn->ensure_grad();
    for (auto& gi : g) gi += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mean_rows(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (rows == 0) throw ContractError("mean_rows of an empty tensor");
  std::vector<double> v(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) v[c] += x.at(r, c);
  const double inv = 1.0 / static_cast<double>(rows);
  for (auto& e : v) e *= inv;
  const bool track = tracking({&x});
  auto out = make_tensor({1, cols}, std::move(v), track);
  NodePtr xn = x.node();
  return finish("mean_rows", out, track, [xn, rows, cols, inv](const Node& o) {
    auto& g = xn->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += o.grad[c] * inv;
  });
}

Tensor l2_normalize_rows(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> v(x.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ss += x.at(r, c) * x.at(r, c);
    if (!(ss > 0.0)) throw NumericDomainError("l2_normalize_rows: zero-norm row " + std::to_string(r));
    norms[r] = std::sqrt(ss);
    for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] = x.at(r, c) / norms[r];
  }
  const bool track = tracking({&x});
  auto out = make_tensor(x.shape(), std::move(v), track);
  NodePtr xn = x.node();
  return finish("l2_normalize_rows", out, track,
                [xn, norms = std::move(norms), rows, cols](const Node& o) {
                  auto& g = xn->ensure_grad();
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* y = o.value.data() + r * cols;
                    const double* gy = o.grad.data() + r * cols;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) dot += y[c] * gy[c];
                    for (std::size_t c = 0; c < cols; ++c) {
                      g[r * cols + c] += (gy[c] - y[c] * dot) / norms[r];
                    }
                  }
                });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::span<const std::uint8_t> allowed) {
  require_rank2("attention", q);
  require_rank2("attention", k);
  require_rank2("attention", v);
  const std::size_t n = q.rows(), m = k.rows(), d = q.cols(), dv = v.cols();
  if (k.cols() != d || v.rows() != m) {
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  if (!allowed.empty() && allowed.size() != n * m) {
    throw DimensionError("attention: mask has " + std::to_string(allowed.size()) +
                         " entries, expected " + std::to_string(n * m));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> p(n * m);
  kernels::gemm(Trans::kNo, Trans::kYes, n, m, d, q.data(), k.data(), p);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = p.data() + i * m;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      row[j] *= inv_sqrt_d;
      if (allowed.empty() || allowed[i * m + j]) {
        mx = any ? std::max(mx, row[j]) : row[j];
        any = true;
      }
    }
    if (!any) {
      throw ContractError("attention: query row " + std::to_string(i) + " has no visible key");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      row[j] = (allowed.empty() || allowed[i * m + j]) ? std::exp(row[j] - mx) : 0.0;
      z += row[j];
    }
    for (std::size_t j = 0; j < m; ++j) row[j] /= z;
  }
  const bool track = tracking({&q, &k, &v});
  auto out = make_tensor({n, dv}, std::vector<double>(n * dv), track);
  kernels::gemm(Trans::kNo, Trans::kNo, n, dv, m, p, v.data(), out.mutable_data());
  NodePtr qn = q.node(), kn = k.node(), vn = v.node();
  return finish("attention", out, track,
                [qn, kn, vn, p = std::move(p), n, m, d, dv, inv_sqrt_d](const Node& o) {
                  if (vn->requires_grad) {
                    kernels::gemm(Trans::kYes, Trans::kNo, m, dv, n, p, o.grad, vn->ensure_grad(),
                                  true);
                  }
                  if (!qn->requires_grad && !kn->requires_grad) return;
                  std::vector<double> ds(n * m);
                  kernels::gemm(Trans::kNo, Trans::kYes, n, m, dv, o.grad, vn->value, ds);
                  for (std::size_t i = 0; i < n; ++i) {
                    const double* pr = p.data() + i * m;
                    double* dr = ds.data() + i * m;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < m; ++j) dot += pr[j] * dr[j];
                    for (std::size_t j = 0; j < m; ++j) dr[j] = pr[j] * (dr[j] - dot) * inv_sqrt_d;
                  }
                  if (qn->requires_grad) {
                    kernels::gemm(Trans::kNo, Trans::kNo, n, d, m, ds, kn->value, qn->ensure_grad(),
                                  true);
                  }
                  if (kn->requires_grad) {
                    kernels::gemm(Trans::kYes, Trans::kNo, m, d, n, ds, qn->value, kn->ensure_grad(),
                                  true);
                  }
                });
}

}  // namespace sevit::ad
