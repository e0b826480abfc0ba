// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// im2col + GEMM convolution. Each batch element is independent, so the batch
// loop may run in parallel; weight and bias gradients are reduced over the
// batch in index order so results do not depend on the thread count.

#include <algorithm>
#include <utility>

#include <Eigen/Core>
#include <vector>

#include "gruvd/errors.hpp"
#include "gruvd/tensor.hpp"
#include "node.hpp"

namespace gruvd {

using detail::make_result;
using detail::Node;
using detail::wants_grad;

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  std::size_t batch, c_in, h, w, c_out, k, h_out, w_out;
  int stride, padding;

  std::size_t patch() const { return c_in * k * k; }
  std::size_t pixels_out() const { return h_out * w_out; }
  bool is_pointwise() const { return k == 1 && stride == 1 && padding == 0; }
};

// Output columns [lo, hi) whose input column for kernel tap kj is in range.
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kj) {
  const long s = g.stride;
  const long off = static_cast<long>(kj) - g.padding;  // iw = ow * s + off
  long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  long hi = (static_cast<long>(g.w) - 1 - off) >= 0 ? (static_cast<long>(g.w) - 1 - off) / s + 1 : 0;
  lo = std::min<long>(lo, static_cast<long>(g.w_out));
  hi = std::clamp<long>(hi, lo, static_cast<long>(g.w_out));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t pixels = g.pixels_out();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = cols + ((c * g.k + ki) * g.k + kj) * pixels;
        const auto [lo, hi] = valid_columns(g, kj);
        const long off = static_cast<long>(kj) - g.padding;
        for (std::size_t oh = 0; oh < g.h_out; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride - g.padding + static_cast<long>(ki);
          T* dst = row + oh * g.w_out;
          if (ih < 0 || ih >= static_cast<long>(g.h)) {
            std::fill_n(dst, g.w_out, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          std::fill_n(dst, lo, T(0));
          if (g.stride == 1) {
            std::copy_n(src + (static_cast<long>(lo) + off), hi - lo, dst + lo);
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] = src[static_cast<long>(ow) * g.stride + off];
          }
          std::fill(dst + hi, dst + g.w_out, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t pixels = g.pixels_out();
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = cols + ((c * g.k + ki) * g.k + kj) * pixels;
        const auto [lo, hi] = valid_columns(g, kj);
        const long off = static_cast<long>(kj) - g.padding;
        for (std::size_t oh = 0; oh < g.h_out; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride - g.padding + static_cast<long>(ki);
          if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
          const T* src = row + oh * g.w_out;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = lo; ow < hi; ++ow) dst[static_cast<long>(ow) * g.stride + off] += src[ow];
        }
      }
    }
  }
}

template <typename T>
ConvGeometry check_geometry(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                            int stride, int padding) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 4) throw ShapeError("conv2d: input must be [B,C,H,W], got " + shape_string(xs));
  if (ws.size() != 4 || ws[2] != ws[3]) {
    throw ShapeError("conv2d: weight must be [Cout,Cin,k,k], got " + shape_string(ws));
  }
  if (ws[2] % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + shape_string(ws));
  if (ws[1] != xs[1]) {
    throw ShapeError("conv2d: input " + shape_string(xs) + " has " + std::to_string(xs[1]) +
                     " channels, weight " + shape_string(ws) + " expects " +
                     std::to_string(ws[1]));
  }
  if (bias.defined() && bias.shape() != Shape{ws[0]}) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " does not match weight " +
                     shape_string(ws));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  const long k = static_cast<long>(ws[2]);
  const long h_num = static_cast<long>(xs[2]) + 2L * padding - k;
  const long w_num = static_cast<long>(xs[3]) + 2L * padding - k;
  if (h_num < 0 || w_num < 0) {
    throw ShapeError("conv2d: non-positive output size for input " + shape_string(xs) +
                     " kernel " + std::to_string(k) + " padding " + std::to_string(padding));
  }
  ConvGeometry g{};
  g.batch = xs[0];
  g.c_in = xs[1];
  g.h = xs[2];
  g.w = xs[3];
  g.c_out = ws[0];
  g.k = ws[2];
  g.stride = stride;
  g.padding = padding;
  g.h_out = static_cast<std::size_t>(h_num / stride + 1);
  g.w_out = static_cast<std::size_t>(w_num / stride + 1);
  return g;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding) {
  const ConvGeometry g = check_geometry(x, weight, bias, stride, padding);
  const std::size_t K = g.patch();
  const std::size_t P = g.pixels_out();
  const std::size_t in_stride = g.c_in * g.h * g.w;
  const std::size_t out_stride = g.c_out * P;

  std::vector<T> out(g.batch * out_stride);
  const T* xv = x.data().data();
  ConstMatMap<T> w_mat(weight.data().data(), g.c_out, K);
  const T* bv = bias.defined() ? bias.data().data() : nullptr;

#pragma omp parallel
  {
    std::vector<T> cols(g.is_pointwise() ? 0 : K * P);
#pragma omp for schedule(static)
    for (long n = 0; n < static_cast<long>(g.batch); ++n) {
      const T* xn = xv + n * in_stride;
      const T* col_ptr = xn;
      if (!g.is_pointwise()) {
        im2col(xn, g, cols.data());
        col_ptr = cols.data();
      }
      MatMap<T> y(out.data() + n * out_stride, g.c_out, P);
      y.noalias() = w_mat * ConstMatMap<T>(col_ptr, K, P);
      if (bv) {
        for (std::size_t co = 0; co < g.c_out; ++co) y.row(co).array() += bv[co];
      }
    }
  }

  Shape out_shape{g.batch, g.c_out, g.h_out, g.w_out};
  return make_result<T>("conv2d", out_shape, std::move(out), {&x, &weight, &bias},
                        [g](Node<T>& self) {
    const std::size_t K = g.patch();
    const std::size_t P = g.pixels_out();
    const std::size_t in_stride = g.c_in * g.h * g.w;
    const std::size_t out_stride = g.c_out * P;
    const bool gx_on = wants_grad(self, 0);
    const bool gw_on = wants_grad(self, 1);
    const bool gb_on = wants_grad(self, 2);
    const T* xv = self.inputs[0]->value.data();
    const T* wv = self.inputs[1]->value.data();
    const T* gy = self.grad.data();
    T* gx = gx_on ? self.inputs[0]->grad_buffer() : nullptr;

    // Per-sample partial weight gradients, summed in batch order afterwards.
    std::vector<T> dw_parts(gw_on ? g.batch * g.c_out * K : 0);
    ConstMatMap<T> w_mat(wv, g.c_out, K);

#pragma omp parallel
    {
      std::vector<T> cols(g.is_pointwise() ? 0 : K * P);
      std::vector<T> dcols(gx_on && !g.is_pointwise() ? K * P : 0);
#pragma omp for schedule(static)
      for (long n = 0; n < static_cast<long>(g.batch); ++n) {
        ConstMatMap<T> dy(gy + n * out_stride, g.c_out, P);
        const T* xn = xv + n * in_stride;
        if (gw_on) {
          const T* col_ptr = xn;
          if (!g.is_pointwise()) {
            im2col(xn, g, cols.data());
            col_ptr = cols.data();
          }
          MatMap<T> dw(dw_parts.data() + n * g.c_out * K, g.c_out, K);
          dw.noalias() = dy * ConstMatMap<T>(col_ptr, K, P).transpose();
        }
        if (gx_on) {
          if (g.is_pointwise()) {
            MatMap<T> dx(gx + n * in_stride, K, P);
            dx.noalias() += w_mat.transpose() * dy;
          } else {
            MatMap<T> dc(dcols.data(), K, P);
            dc.noalias() = w_mat.transpose() * dy;
            col2im_add(dcols.data(), g, gx + n * in_stride);
          }
        }
      }
    }

    if (gw_on) {
      T* gw = self.inputs[1]->grad_buffer();
      const std::size_t wn = g.c_out * K;
      for (std::size_t n = 0; n < g.batch; ++n) {
        const T* part = dw_parts.data() + n * wn;
        for (std::size_t i = 0; i < wn; ++i) gw[i] += part[i];
      }
    }
    if (gb_on) {
      T* gb = self.inputs[2]->grad_buffer();
      for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t co = 0; co < g.c_out; ++co) {
          const T* row = gy + n * out_stride + co * P;
          T acc = 0;
          for (std::size_t p = 0; p < P; ++p) acc += row[p];
          gb[co] += acc;
        }
      }
    }
  });
}

template Tensor<float> conv2d<float>(const Tensor<float>&, const Tensor<float>&,
                                     const Tensor<float>&, int, int);
template Tensor<double> conv2d<double>(const Tensor<double>&, const Tensor<double>&,
                                       const Tensor<double>&, int, int);

}  // namespace gruvd
