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

#include "sevit/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "sevit/error.hpp"

namespace sevit::ad {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.size() > 2) {
    throw DimensionError("tensors are limited to rank 2, got " + shape_string(shape));
  }
  if (shape_size(shape) != data.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_size(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return make_tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value) { return make_tensor({}, {value}, false); }

Tensor Tensor::row(std::vector<double> data) {
  const auto n = data.size();
  return make_tensor({1, n}, std::move(data), false);
}

std::size_t Tensor::rows() const {
  return rank() == 2 ? node_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return node_->shape[1];
  if (rank() == 1) return node_->shape[0];
  return 1;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}

Tensor Tensor::clone() const {
  auto t = make_tensor(node_->shape, node_->value, node_->requires_grad);
  t.node_->grad = node_->grad;
  return t;
}

Tensor Tensor::detach() const { return make_tensor(node_->shape, node_->value, false); }

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(const char* op, const Tensor& output, BackwardFn backward) {
  entries_.push_back(Entry{op, output.node(), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  last_visits_ = 0;
  if (!loss.requires_grad()) {
    clear();
    return;
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    ++last_visits_;
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->backward(*it->output);
  }
  clear();
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw ContractError("backward() called with no active tape");
  tape->backward(loss);
}

}  // namespace sevit::ad
