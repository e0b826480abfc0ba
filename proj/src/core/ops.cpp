// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include "gruvd/errors.hpp"
#include "gruvd/tensor.hpp"
#include "node.hpp"

namespace gruvd {

using detail::make_result;
using detail::Node;
using detail::wants_grad;

namespace {

enum class Operand { kSame, kScalar, kChannel };

struct BinaryPlan {
  Shape out;
  Operand a = Operand::kSame;
  Operand b = Operand::kSame;
  std::size_t channels = 1;
  std::size_t inner = 1;
};

bool is_per_channel(const Shape& p, const Shape& full) {
  return full.size() == 4 && p.size() == 4 && p[0] == 1 && p[1] == full[1] && p[2] == 1 &&
         p[3] == 1;
}

template <typename T>
BinaryPlan plan_binary(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.defined() || !b.defined()) throw UsageError(std::string(op) + " on an undefined tensor");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  BinaryPlan plan;
  if (sa == sb) {
    plan.out = sa;
  } else if (shape_numel(sb) == 1) {
    plan.out = sa;
    plan.b = Operand::kScalar;
  } else if (shape_numel(sa) == 1) {
    plan.out = sb;
    plan.a = Operand::kScalar;
  } else if (is_per_channel(sb, sa)) {
    plan.out = sa;
    plan.b = Operand::kChannel;
  } else if (is_per_channel(sa, sb)) {
    plan.out = sb;
    plan.a = Operand::kChannel;
  } else {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(sa) + " vs " +
                     shape_string(sb));
  }
  if (plan.out.size() == 4) {
    plan.channels = plan.out[1];
    plan.inner = plan.out[2] * plan.out[3];
  }
  return plan;
}

inline std::size_t operand_index(Operand kind, const BinaryPlan& p, std::size_t i) {
  switch (kind) {
    case Operand::kSame:
      return i;
    case Operand::kScalar:
      return 0;
    case Operand::kChannel:
      return (i / p.inner) % p.channels;
  }
  return i;
}

// Fwd(a, b) -> out; Da(a, b, g) -> dL/da; Db(a, b, g) -> dL/db.
template <typename T, typename Fwd, typename Da, typename Db>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Da da,
                    Db db) {
  BinaryPlan plan = plan_binary(name, a, b);
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t n = shape_numel(plan.out);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fwd(av[operand_index(plan.a, plan, i)], bv[operand_index(plan.b, plan, i)]);
  }
  return make_result<T>(name, plan.out, std::move(out), {&a, &b}, [plan, da, db](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const auto& g = self.grad;
    const bool ga = wants_grad(self, 0);
    const bool gb = wants_grad(self, 1);
    T* gax = ga ? self.inputs[0]->grad_buffer() : nullptr;
    T* gbx = gb ? self.inputs[1]->grad_buffer() : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t ia = operand_index(plan.a, plan, i);
      const std::size_t ib = operand_index(plan.b, plan, i);
      if (ga) gax[ia] += da(av[ia], bv[ib], g[i]);
      if (gb) gbx[ib] += db(av[ia], bv[ib], g[i]);
    }
  });
}

// Fwd(x) -> y; D(x, y, g) -> dL/dx.
template <typename T, typename Fwd, typename D>
Tensor<T> unary_op(const char* name, const Tensor<T>& x, Fwd fwd, D d) {
  if (!x.defined()) throw UsageError(std::string(name) + " on an undefined tensor");
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_result<T>(name, x.shape(), std::move(out), {&x}, [d](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& yv = self.value;
    const auto& g = self.grad;
    T* gx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += d(xv[i], yv[i], g[i]);
  });
}

void require_rank4(const char* op, const Shape& s) {
  if (s.size() != 4) throw ShapeError(std::string(op) + " expects [B,C,H,W], got " + shape_string(s));
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T g) { return g; },
      [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T g) { return g; },
      [](T, T, T g) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; },
      [](T x, T, T g) { return g * x; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  // Subgradient at zero is zero.
  return unary_op<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T, T g) { return v > T(0) ? g : (v < T(0) ? -g : T(0)); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary_op<T>(
      "scale", x, [factor](T v) { return factor * v; },
      [factor](T, T, T g) { return factor * g; });
}

template <typename T>
Tensor<T> elementwise(ElementwiseKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  switch (kind) {
    case ElementwiseKind::kAdd:
      return add(a, b);
    case ElementwiseKind::kSub:
      return sub(a, b);
    case ElementwiseKind::kMul:
      return mul(a, b);
    case ElementwiseKind::kAbs:
      return abs(a);
    case ElementwiseKind::kScale:
      if (!b.defined() || b.numel() != 1) throw UsageError("scale needs a one-element factor");
      return scale(a, b.item());
  }
  throw UsageError("unknown elementwise kind");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  static constexpr T lo = std::numeric_limits<T>::min();
  static constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return unary_op<T>(
      "sigmoid", x,
      [](T v) {
        T s;
        if (v >= T(0)) {
          s = T(1) / (T(1) + std::exp(-v));
        } else {
          const T e = std::exp(v);
          s = e / (T(1) + e);
        }
        return std::clamp(s, lo, hi);
      },
      [](T, T s, T g) { return g * s * (T(1) - s); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  static constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return unary_op<T>(
      "tanh", x, [](T v) { return std::clamp(std::tanh(v), -hi, hi); },
      [](T, T t, T g) { return g * (T(1) - t * t); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary_op<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T, T g) { return v > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> activation(Activation kind, const Tensor<T>& x) {
  switch (kind) {
    case Activation::kNone:
      return x;
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kRelu:
      return relu(x);
  }
  return x;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw UsageError("concat_channels of zero tensors");
  for (const auto& p : parts) require_rank4("concat_channels", p.shape());
  const Shape& s0 = parts[0].shape();
  std::size_t total_c = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw ShapeError("concat_channels: shape mismatch " + shape_string(s0) + " vs " +
                       shape_string(s));
    }
    total_c += s[1];
  }
  const std::size_t batch = s0[0];
  const std::size_t plane = s0[2] * s0[3];
  Shape out_shape{batch, total_c, s0[2], s0[3]};
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t c_off = 0;
  for (const auto& p : parts) {
    offsets.push_back(c_off);
    const std::size_t c = p.dim(1);
    const auto v = p.data();
    for (std::size_t n = 0; n < batch; ++n) {
      std::copy_n(v.begin() + n * c * plane, c * plane,
                  out.begin() + (n * total_c + c_off) * plane);
    }
    c_off += c;
  }
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return make_result<T>("concat", out_shape, std::move(out), inputs,
                        [offsets, batch, plane, total_c](Node<T>& self) {
                          for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                            if (!wants_grad(self, k)) continue;
                            auto& in = *self.inputs[k];
                            const std::size_t c = in.shape[1];
                            T* gi = in.grad_buffer();
                            for (std::size_t n = 0; n < batch; ++n) {
                              const T* src = self.grad.data() + (n * total_c + offsets[k]) * plane;
                              T* dst = gi + n * c * plane;
                              for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> broadcast_channels(const Tensor<T>& x, std::size_t channels) {
  require_rank4("broadcast_channels", x.shape());
  if (x.dim(1) == channels) return x;
  if (x.dim(1) != 1) {
    throw ShapeError("broadcast_channels: cannot expand " + shape_string(x.shape()) + " to " +
                     std::to_string(channels) + " channels");
  }
  const std::size_t batch = x.dim(0);
  const std::size_t plane = x.dim(2) * x.dim(3);
  Shape out_shape{batch, channels, x.dim(2), x.dim(3)};
  std::vector<T> out(shape_numel(out_shape));
  const auto v = x.data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy_n(v.begin() + n * plane, plane, out.begin() + (n * channels + c) * plane);
    }
  }
  return make_result<T>("broadcast_channels", out_shape, std::move(out), {&x},
                        [batch, channels, plane](Node<T>& self) {
                          T* gx = self.inputs[0]->grad_buffer();
                          for (std::size_t n = 0; n < batch; ++n) {
                            for (std::size_t c = 0; c < channels; ++c) {
                              const T* src = self.grad.data() + (n * channels + c) * plane;
                              for (std::size_t i = 0; i < plane; ++i) gx[n * plane + i] += src[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank4("slice_channels", x.shape());
  const std::size_t c = x.dim(1);
  if (begin >= end || end > c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t plane = x.dim(2) * x.dim(3);
  const std::size_t width = end - begin;
  Shape out_shape{batch, width, x.dim(2), x.dim(3)};
  std::vector<T> out(shape_numel(out_shape));
  const auto v = x.data();
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(v.begin() + (n * c + begin) * plane, width * plane,
                out.begin() + n * width * plane);
  }
  return make_result<T>("slice_channels", out_shape, std::move(out), {&x},
                        [batch, c, begin, width, plane](Node<T>& self) {
                          T* gx = self.inputs[0]->grad_buffer();
                          for (std::size_t n = 0; n < batch; ++n) {
                            const T* src = self.grad.data() + n * width * plane;
                            T* dst = gx + (n * c + begin) * plane;
                            for (std::size_t i = 0; i < width * plane; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto v = x.data();
  T acc = 0;
  for (T e : v) acc += e;
  return make_result<T>("sum", Shape{1}, std::vector<T>{acc}, {&x}, [](Node<T>& self) {
    T* gx = self.inputs[0]->grad_buffer();
    const T g = self.grad[0];
    for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const auto v = x.data();
  if (v.empty()) throw ShapeError("mean of an empty tensor");
  T acc = 0;
  for (T e : v) acc += e;
  const T inv = T(1) / static_cast<T>(v.size());
  return make_result<T>("mean", Shape{1}, std::vector<T>{acc * inv}, {&x}, [inv](Node<T>& self) {
    T* gx = self.inputs[0]->grad_buffer();
    const T g = self.grad[0] * inv;
    for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Tensor<T> blend(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& f) {
  if (a.shape() != b.shape() || a.shape() != f.shape()) {
    throw ShapeError("blend: shape mismatch " + shape_string(a.shape()) + ", " +
                     shape_string(b.shape()) + ", " + shape_string(f.shape()));
  }
  const auto av = a.data();
  const auto bv = b.data();
  const auto fv = f.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T y = (T(1) - fv[i]) * av[i] + fv[i] * bv[i];
    out[i] = std::clamp(y, std::min(av[i], bv[i]), std::max(av[i], bv[i]));
  }
  return make_result<T>("blend", a.shape(), std::move(out), {&a, &b, &f}, [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const auto& fv = self.inputs[2]->value;
    const auto& g = self.grad;
    T* ga = wants_grad(self, 0) ? self.inputs[0]->grad_buffer() : nullptr;
    T* gb = wants_grad(self, 1) ? self.inputs[1]->grad_buffer() : nullptr;
    T* gf = wants_grad(self, 2) ? self.inputs[2]->grad_buffer() : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ga) ga[i] += g[i] * (T(1) - fv[i]);
      if (gb) gb[i] += g[i] * fv[i];
      if (gf) gf[i] += g[i] * (bv[i] - av[i]);
    }
  });
}

#define GRUVD_INSTANTIATE(T)                                                               \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> abs<T>(const Tensor<T>&);                                             \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                        \
  template Tensor<T> elementwise<T>(ElementwiseKind, const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                         \
  template Tensor<T> tanh<T>(const Tensor<T>&);                                            \
  template Tensor<T> relu<T>(const Tensor<T>&);                                            \
  template Tensor<T> activation<T>(Activation, const Tensor<T>&);                          \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);                       \
  template Tensor<T> broadcast_channels<T>(const Tensor<T>&, std::size_t);                 \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, std::size_t, std::size_t);        \
  template Tensor<T> sum<T>(const Tensor<T>&);                                             \
  template Tensor<T> mean<T>(const Tensor<T>&);                                            \
  template Tensor<T> blend<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

GRUVD_INSTANTIATE(float)
GRUVD_INSTANTIATE(double)

#undef GRUVD_INSTANTIATE

}  // namespace gruvd
