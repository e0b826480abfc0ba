// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Dense NCHW tensors with reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage and graph node.
// Every operation below returns a fresh tensor; tracked tensors are never
// mutated in place. When at least one input requires a gradient (and grad
// mode is enabled) the result records its inputs and a backward rule, which
// backward() replays in reverse execution order.
//
// Broadcasting is deliberately narrow. A binary operand may be a scalar
// (one element) or a per-channel tensor [1,C,1,1] against a [B,C,H,W]
// partner; everything else must match exactly.
//
// Explicit instantiations exist for float (training) and double (gradient
// checks and oracles).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gruvd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
template <typename T>
struct Node;
}

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  /// Writable view of a leaf's values. Throws UsageError on op results.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  /// Only leaves may change their tracking flag.
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  /// Name of the producing operation ("leaf" for leaves).
  const char* op_name() const;

  bool has_grad() const;
  std::span<const T> grad() const;
  void zero_grad();

  /// Untracked leaf holding a copy of the values.
  Tensor detach() const;

  /// Untracked copy converted to another precision.
  template <typename U>
  Tensor<U> cast() const {
    auto src = data();
    return Tensor<U>(shape(), std::vector<U>(src.begin(), src.end()));
  }

  explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}
  detail::Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// ---------------------------------------------------------------------------
// Operations

enum class ElementwiseKind { kAdd, kSub, kMul, kAbs, kScale };
enum class Activation { kNone, kSigmoid, kTanh, kRelu };

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> abs(const Tensor<T>& x);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// Dispatcher over the ops above. `b` is ignored by kAbs; kScale reads the
/// factor from the single element of `b`, which is treated as a constant.
template <typename T>
Tensor<T> elementwise(ElementwiseKind kind, const Tensor<T>& a, const Tensor<T>& b = {});

/// Sigmoid and tanh outputs are clamped to the open interval so the range
/// guarantees hold in finite precision.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> activation(Activation kind, const Tensor<T>& x);

/// x [B,Cin,H,W], weight [Cout,Cin,k,k] with k odd, bias [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

/// Concatenates 4-D tensors along dim 1. Batch and spatial dims must agree.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> concat_channels(std::initializer_list<Tensor<T>> parts) {
  return concat_channels<T>(std::span<const Tensor<T>>(parts.begin(), parts.size()));
}

/// Replicates a single-channel [B,1,H,W] tensor to [B,C,H,W].
template <typename T>
Tensor<T> broadcast_channels(const Tensor<T>& x, std::size_t channels);

/// Channels [begin, end) of a 4-D tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// (1 - f) * a + f * b, elementwise, with the result clamped into
/// [min(a,b), max(a,b)] so the convex-combination bound is exact.
template <typename T>
Tensor<T> blend(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& f);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}

// ---------------------------------------------------------------------------
// Differentiation

/// Ordered list of the operations reachable from a root tensor. Holding a
/// record keeps intermediates alive; clear() cuts the graph and releases them.
template <typename T>
class ComputationRecord {
 public:
  explicit ComputationRecord(const Tensor<T>& root);

  std::size_t size() const { return ops_.size(); }
  /// Operation names in execution order.
  std::vector<std::string> op_names() const;
  /// Accumulates d(root)/d(leaf) into every reachable tracked leaf.
  void replay_backward();
  /// Sequence numbers visited by the last replay, in visiting order.
  const std::vector<std::uint64_t>& replay_order() const { return replay_order_; }
  void clear();

 private:
  std::shared_ptr<detail::Node<T>> root_;
  std::vector<std::shared_ptr<detail::Node<T>>> ops_;
  std::vector<std::shared_ptr<detail::Node<T>>> leaves_;
  std::vector<std::uint64_t> replay_order_;
};

/// Backpropagates a scalar loss. Leaf gradients accumulate across calls until
/// zero_grad(); intermediate gradients are recomputed on every call.
template <typename T>
void backward(const Tensor<T>& loss);

/// max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-8),
/// using central differences of step epsilon around x.
template <typename T>
T finite_difference_check(const std::function<Tensor<T>(const Tensor<T>&)>& f,
                          const Tensor<T>& x, T epsilon);

/// Same measure for a leaf captured inside `loss_fn` (e.g. a model
/// parameter). The leaf is perturbed in place and restored.
template <typename T>
T leaf_gradient_error(const std::function<Tensor<T>()>& loss_fn, Tensor<T>& leaf, T epsilon);

template <typename T>
T relative_gradient_error(T analytic, T numeric);

}  // namespace gruvd
