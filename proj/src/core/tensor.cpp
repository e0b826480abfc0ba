// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include "gruvd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "gruvd/errors.hpp"
#include "node.hpp"

namespace gruvd {

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_sequence{1};
}  // namespace

namespace detail {
std::uint64_t next_sequence() { return g_sequence.fetch_add(1, std::memory_order_relaxed); }
}  // namespace detail

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  node_ = detail::make_leaf<T>(std::move(shape), std::move(data), requires_grad).node_ptr();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> data(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!node_) throw UsageError("access to an undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t i) const {
  const auto& s = shape();
  if (i >= s.size()) {
    throw ShapeError("dimension " + std::to_string(i) + " out of range for " + shape_string(s));
  }
  return s[i];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return shape_numel(shape());
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  if (!node_) throw UsageError("access to an undefined tensor");
  return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node_) throw UsageError("access to an undefined tensor");
  if (!node_->leaf) throw UsageError(std::string("cannot mutate the result of op ") + node_->op);
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  if (!node_) throw UsageError("access to an undefined tensor");
  if (!node_->leaf) throw UsageError("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = flag;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return node_ && node_->leaf;
}

template <typename T>
const char* Tensor<T>::op_name() const {
  return node_ ? node_->op : "undefined";
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw UsageError("tensor has no gradient");
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node_->value, false);
}

// ---------------------------------------------------------------------------
// ComputationRecord

template <typename T>
ComputationRecord<T>::ComputationRecord(const Tensor<T>& root) : root_(root.node_ptr()) {
  if (!root_) throw UsageError("computation record of an undefined tensor");
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<std::shared_ptr<detail::Node<T>>> stack{root_};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n.get()).second) continue;
    if (n->leaf) {
      leaves_.push_back(n);
      continue;
    }
    for (const auto& in : n->inputs) stack.push_back(in);
    ops_.push_back(std::move(n));
  }
  std::sort(ops_.begin(), ops_.end(),
            [](const auto& a, const auto& b) { return a->sequence < b->sequence; });
}

template <typename T>
std::vector<std::string> ComputationRecord<T>::op_names() const {
  std::vector<std::string> names;
  names.reserve(ops_.size());
  for (const auto& n : ops_) names.emplace_back(n->op);
  return names;
}

template <typename T>
void ComputationRecord<T>::replay_backward() {
  for (auto& n : ops_) n->grad.assign(n->value.size(), T(0));
  for (auto& n : leaves_) n->grad_buffer();
  // Non-scalar roots are seeded with ones, i.e. the gradient of their sum.
  T* seed = root_->grad_buffer();
  for (std::size_t i = 0; i < root_->grad.size(); ++i) seed[i] += T(1);

  replay_order_.clear();
  replay_order_.reserve(ops_.size());
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    detail::Node<T>& n = **it;
    replay_order_.push_back(n.sequence);
    if (n.backward_fn) n.backward_fn(n);
  }
  for (auto& n : ops_) {
    if (n != root_) std::vector<T>().swap(n->grad);
  }
}

template <typename T>
void ComputationRecord<T>::clear() {
  for (auto& n : ops_) {
    n->inputs.clear();
    n->backward_fn = nullptr;
    n->leaf = true;
    n->requires_grad = false;
    std::vector<T>().swap(n->grad);
  }
  ops_.clear();
  leaves_.clear();
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward needs a scalar loss, got shape " +
                     (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward on a loss that does not depend on any tracked tensor");
  }
  ComputationRecord<T> record(loss);
  record.replay_backward();
}

// ---------------------------------------------------------------------------
// Finite differences

template <typename T>
T relative_gradient_error(T analytic, T numeric) {
  T denom = std::max({std::abs(analytic), std::abs(numeric), T(1e-8)});
  return std::abs(analytic - numeric) / denom;
}

template <typename T>
T finite_difference_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x,
                          T epsilon) {
  if (!(epsilon > T(0))) throw ConfigError("finite difference epsilon must be positive");
  Tensor<T> leaf(x.shape(), std::vector<T>(x.data().begin(), x.data().end()), true);
  return leaf_gradient_error<T>([&] { return f(leaf); }, leaf, epsilon);
}

template <typename T>
T leaf_gradient_error(const std::function<Tensor<T>()>& loss_fn, Tensor<T>& leaf, T epsilon) {
  if (!(epsilon > T(0))) throw ConfigError("finite difference epsilon must be positive");
  if (!leaf.is_leaf() || !leaf.requires_grad()) {
    throw UsageError("gradient check needs a tracked leaf");
  }
  leaf.zero_grad();
  backward(loss_fn());
  std::vector<T> analytic(leaf.grad().begin(), leaf.grad().end());
  leaf.zero_grad();

  NoGradGuard no_grad;
  auto values = leaf.mutable_data();
  T worst = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T saved = values[i];
    values[i] = saved + epsilon;
    const T plus = loss_fn().item();
    values[i] = saved - epsilon;
    const T minus = loss_fn().item();
    values[i] = saved;
    const T numeric = (plus - minus) / (T(2) * epsilon);
    worst = std::max(worst, relative_gradient_error(analytic[i], numeric));
  }
  return worst;
}

#define GRUVD_INSTANTIATE(T)                                                                 \
  template class Tensor<T>;                                                                  \
  template class ComputationRecord<T>;                                                       \
  template void backward<T>(const Tensor<T>&);                                               \
  template T relative_gradient_error<T>(T, T);                                               \
  template T finite_difference_check<T>(const std::function<Tensor<T>(const Tensor<T>&)>&,   \
                                        const Tensor<T>&, T);                                \
  template T leaf_gradient_error<T>(const std::function<Tensor<T>()>&, Tensor<T>&, T);

GRUVD_INSTANTIATE(float)
GRUVD_INSTANTIATE(double)

#undef GRUVD_INSTANTIATE

}  // namespace gruvd
