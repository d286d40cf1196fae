// Copyright 2026 The WaBERT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wabert/errors.hpp"

namespace wabert {

struct Node;

// Dense 64-bit float tensor with an optional reverse-mode tape node.
// Data and grad buffers are shared so copies alias; a tensor is treated as
// immutable once it has entered a computation graph. Graphs are confined to
// one thread; read-only tensors may be shared across threads.
struct Tensor {
  std::vector<std::size_t> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // lazily allocated
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // set when produced by a differentiable op

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor from(std::vector<double> values, std::vector<std::size_t> shape);

  // Marks the tensor as a trainable leaf. The grad buffer is allocated
  // here so that every copy of the tensor aliases the same buffer; a lazy
  // allocation on a copy would be invisible to the original.
  Tensor& set_requires_grad(bool flag = true) {
    requires_grad = flag;
    if (flag) ensure_grad();
    return *this;
  }

  std::size_t numel() const;
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double value() const;  // scalar accessor, throws ShapeMismatch otherwise

  double& at(std::size_t i) { return (*data)[i]; }
  double at(std::size_t i) const { return (*data)[i]; }
  double& at(std::size_t r, std::size_t c) { return (*data)[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return (*data)[r * cols() + c]; }

  void ensure_grad();  // allocates a zeroed grad buffer if absent
  void zero_grad();
  bool all_finite() const;
};

// One tape entry: the producing op's parents and its vector-Jacobian
// product. `backward` receives the output tensor (to read its grad) and
// accumulates into the parents' grads. The lambda must never capture the
// output tensor itself, or the node would own itself.
struct Node {
  std::vector<Tensor> parents;
  std::function<void(const Tensor& out)> backward;
};

// Reverse-mode sweep from a scalar root: seeds d(root)/d(root) = 1 and
// applies each node's backward in reverse topological order.
void backward(Tensor& root);

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

// True if any input wants a gradient, i.e. the op must record a node.
bool grad_needed(const Tensor& a);
bool grad_needed(const Tensor& a, const Tensor& b);
bool grad_needed(const Tensor& a, const Tensor& b, const Tensor& c);

// Accumulates `rhs` into `t.grad` if t participates in differentiation.
void accumulate_grad(Tensor& t, const std::vector<double>& rhs);

}  // namespace wabert
