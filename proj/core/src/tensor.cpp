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

#include "wabert/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace wabert {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(shape_numel(t.shape), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : *t.data) v = value;
  return t;
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::from(std::vector<double> values, std::vector<std::size_t> shape) {
  if (values.size() != shape_numel(shape)) {
    throw ShapeMismatch("Tensor::from: " + std::to_string(values.size()) +
                        " values for shape " + shape_str(shape));
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

std::size_t Tensor::numel() const { return data ? data->size() : 0; }

double Tensor::value() const {
  if (numel() != 1) {
    throw ShapeMismatch("value(): tensor of shape " + shape_str(shape) +
                        " is not a scalar");
  }
  return (*data)[0];
}

void Tensor::ensure_grad() {
  if (!grad) grad = std::make_shared<std::vector<double>>(numel(), 0.0);
}

void Tensor::zero_grad() {
  ensure_grad();
  std::fill(grad->begin(), grad->end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : *data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool grad_needed(const Tensor& a) { return a.requires_grad; }
bool grad_needed(const Tensor& a, const Tensor& b) {
  return a.requires_grad || b.requires_grad;
}
bool grad_needed(const Tensor& a, const Tensor& b, const Tensor& c) {
  return a.requires_grad || b.requires_grad || c.requires_grad;
}

void accumulate_grad(Tensor& t, const std::vector<double>& rhs) {
  if (!t.requires_grad) return;
  t.ensure_grad();
  for (std::size_t i = 0; i < rhs.size(); ++i) (*t.grad)[i] += rhs[i];
}

namespace {

struct Frame {
  Tensor tensor;
  std::size_t next_parent = 0;
};

}  // namespace

void backward(Tensor& root) {
  if (root.numel() != 1) {
    throw ShapeMismatch("backward: root must be scalar, got " +
                        shape_str(root.shape));
  }
  root.ensure_grad();
  (*root.grad)[0] += 1.0;
  if (!root.node) return;

  // Iterative post-order DFS; each node visited once.
  std::vector<Tensor> order;
  std::unordered_set<Node*> seen;
  std::vector<Frame> stack;
  seen.insert(root.node.get());
  stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& top = stack.back();
    Node* n = top.tensor.node.get();
    if (top.next_parent < n->parents.size()) {
      Tensor& p = n->parents[top.next_parent++];
      if (p.node && !seen.count(p.node.get())) {
        seen.insert(p.node.get());
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(top.tensor);
      stack.pop_back();
    }
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    it->ensure_grad();
    it->node->backward(*it);
  }
}

}  // namespace wabert
