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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sevit::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  // Empty until a gradient flows into the node. Stays empty for tensors that
  // do not require grad.
  std::vector<double> grad;
  bool requires_grad = false;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major tensor of doubles (rank 0, 1 or 2). Copies share storage;
// use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);
  // A rank-2 1 x n tensor.
  static Tensor row(std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  // Matrix view: rank-1 tensors are a single row, scalars are 1 x 1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->value; }
  // Parameter updates only; never mutate a tensor that is already on a tape.
  std::span<double> mutable_data() { return node_->value; }
  double item() const;
  double at(std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  Tensor clone() const;
  // Same values, no grad tracking.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_tensor(Shape, std::vector<double>, bool);

  std::shared_ptr<detail::Node> node_;
};

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad);

// Ordered record of differentiable operations for one training step.
// Operations are recorded only while a tape is active on the calling thread
// (see TapeScope) and only when at least one input requires grad.
class Tape {
 public:
  using BackwardFn = std::function<void(const detail::Node& out)>;

  struct Entry {
    const char* op;
    std::shared_ptr<detail::Node> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, const Tensor& output, BackwardFn backward);
  // Reverse sweep from a scalar loss, then clears the tape.
  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  // Number of entries run by the last backward().
  std::size_t last_backward_visits() const { return last_visits_; }

  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Entry> entries_;
  std::size_t last_visits_ = 0;
};

// Makes `tape` the recording tape of this thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Runs backward on the active tape.
void backward(const Tensor& loss);

}  // namespace sevit::ad
