// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <vector>

#include "gruvd/tensor.hpp"

namespace gruvd::detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t sequence = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad, accumulates into inputs that require grad.
  std::function<void(Node&)> backward_fn;

  T* grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

std::uint64_t next_sequence();

template <typename T>
Tensor<T> make_leaf(Shape shape, std::vector<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Tensor<T>(std::move(n));
}

// Builds an op result. Inputs are retained (and the backward rule attached)
// only when the result is tracked.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool tracked = false;
  if (grad_mode_enabled()) {
    for (const Tensor<T>* in : inputs) {
      if (in->defined() && in->requires_grad()) tracked = true;
    }
  }
  if (tracked) {
    n->requires_grad = true;
    n->leaf = false;
    n->sequence = next_sequence();
    for (const Tensor<T>* in : inputs) n->inputs.push_back(in->node_ptr());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(n));
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> value,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool tracked = false;
  if (grad_mode_enabled()) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) tracked = true;
    }
  }
  if (tracked) {
    n->requires_grad = true;
    n->leaf = false;
    n->sequence = next_sequence();
    for (const auto& in : inputs) n->inputs.push_back(in.node_ptr());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(n));
}

// True when input `i` of a tracked node wants a gradient.
template <typename T>
bool wants_grad(const Node<T>& n, std::size_t i) {
  return i < n.inputs.size() && n.inputs[i] && n.inputs[i]->requires_grad;
}

}  // namespace gruvd::detail
