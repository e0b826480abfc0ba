// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Straight-line reference implementations shared by the unit tests and the
// acceptance run. They use plain loops and never call the library's ops.

#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "gruvd/backbone.hpp"
#include "gruvd/cell.hpp"
#include "gruvd/tensor.hpp"

namespace gruvd::test {

// Direct seven-loop convolution, zero padding.
inline TensorD conv_oracle(const TensorD& x, const TensorD& w, const TensorD& b, int stride, int pad) {
  const long B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const long Co = w.dim(0), K = w.dim(2);
  const long Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  std::vector<double> out(B * Co * Ho * Wo, 0.0);
  const auto xv = x.data(), wv = w.data();
  for (long n = 0; n < B; ++n)
    for (long co = 0; co < Co; ++co)
      for (long oh = 0; oh < Ho; ++oh)
        for (long ow = 0; ow < Wo; ++ow) {
          double acc = b.defined() ? b.data()[co] : 0.0;
          for (long ci = 0; ci < Ci; ++ci)
            for (long ki = 0; ki < K; ++ki)
              for (long kj = 0; kj < K; ++kj) {
                const long ih = oh * stride - pad + ki, iw = ow * stride - pad + kj;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += xv[((n * Ci + ci) * H + ih) * W + iw] * wv[((co * Ci + ci) * K + ki) * K + kj];
              }
          out[((n * Co + co) * Ho + oh) * Wo + ow] = acc;
        }
  return TensorD(Shape{static_cast<size_t>(B), static_cast<size_t>(Co), static_cast<size_t>(Ho),
                       static_cast<size_t>(Wo)},
                 out);
}

// Plain-loop reference: images are [C][H][W] vectors for a single batch item.
struct Img {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> v;
  double& at(std::size_t ci, std::size_t i, std::size_t j) { return v[(ci * h + i) * w + j]; }
  double at(std::size_t ci, std::size_t i, std::size_t j) const { return v[(ci * h + i) * w + j]; }
};

inline Img make_img(std::size_t c, std::size_t h, std::size_t w) { return {c, h, w, std::vector<double>(c * h * w)}; }

inline Img from_tensor(const TensorD& t, std::size_t n = 0) {
  Img out = make_img(t.dim(1), t.dim(2), t.dim(3));
  const auto d = t.data();
  std::copy_n(d.begin() + static_cast<long>(n * out.v.size()), out.v.size(), out.v.begin());
  return out;
}

inline Img conv_same(const Img& x, const TensorD& weight, const TensorD& bias) {
  const std::size_t co_n = weight.dim(0), k = weight.dim(2);
  const long pad = static_cast<long>(k / 2);
  const auto w = weight.data();
  Img y = make_img(co_n, x.h, x.w);
  for (std::size_t co = 0; co < co_n; ++co)
    for (std::size_t i = 0; i < x.h; ++i)
      for (std::size_t j = 0; j < x.w; ++j) {
        double acc = bias.data()[co];
        for (std::size_t ci = 0; ci < x.c; ++ci)
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) {
              const long ii = static_cast<long>(i + a) - pad, jj = static_cast<long>(j + b) - pad;
              if (ii < 0 || jj < 0 || ii >= static_cast<long>(x.h) || jj >= static_cast<long>(x.w)) continue;
              acc += w[((co * x.c + ci) * k + a) * k + b] * x.at(ci, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
            }
        y.at(co, i, j) = acc;
      }
  return y;
}

template <typename F>
inline Img map(Img x, F f) {
  for (double& e : x.v) e = f(e);
  return x;
}

inline Img cat(std::initializer_list<Img> parts) {
  Img out = make_img(0, parts.begin()->h, parts.begin()->w);
  for (const Img& p : parts) {
    out.c += p.c;
    out.v.insert(out.v.end(), p.v.begin(), p.v.end());
  }
  return out;
}

inline double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Plain backbone from its named parameters.
inline Img net(const Backbone<double>& b, const Img& x, Activation act) {
  Img feat = map(conv_same(x, b.parameter("head.weight"), b.parameter("head.bias")),
                 [](double e) { return std::max(e, 0.0); });
  for (int i = 0; i < b.spec().num_blocks - 1; ++i) {
    const std::string p = "body." + std::to_string(i);
    const Img t = conv_same(feat, b.parameter(p + ".weight"), b.parameter(p + ".bias"));
    for (std::size_t e = 0; e < feat.v.size(); ++e) feat.v[e] += std::max(t.v[e], 0.0);
  }
  Img out = conv_same(feat, b.parameter("tail.weight"), b.parameter("tail.bias"));
  switch (act) {
    case Activation::kSigmoid: return map(out, sig);
    case Activation::kRelu: return map(out, [](double e) { return std::max(e, 0.0); });
    case Activation::kTanh: return map(out, [](double e) { return std::tanh(e); });
    case Activation::kNone: return out;
  }
  return out;
}

struct OracleStep {
  Img y, s, r, f;
};

inline OracleStep oracle_gru_vd(const GruVdModel<double>& m, const Img& x, const Img& delta1, const Img& yp) {
  Img d = make_img(0, x.h, x.w);
  for (std::size_t c = 0; c < x.c; ++c) d = c == 0 ? delta1 : cat({d, delta1});
  Img diff = x;
  for (std::size_t e = 0; e < diff.v.size(); ++e) diff.v[e] = std::abs(x.v[e] - yp.v[e]);
  OracleStep o;
  o.r = net(m.reset_net, cat({d, diff}), Activation::kSigmoid);
  Img ry = yp;
  for (std::size_t e = 0; e < ry.v.size(); ++e) ry.v[e] = o.r.v[e] * yp.v[e];
  o.s = net(m.denoise_net, cat({ry, x, d}), Activation::kRelu);
  o.f = net(m.update_net, cat({o.s, yp, o.r, d}), Activation::kSigmoid);
  o.y = yp;
  for (std::size_t e = 0; e < o.y.v.size(); ++e) o.y.v[e] = (1 - o.f.v[e]) * yp.v[e] + o.f.v[e] * o.s.v[e];
  return o;
}

inline OracleStep oracle_gru(const GruModel<double>& m, const Img& x, const Img& yp) {
  OracleStep o;
  o.r = net(m.reset_net, cat({x, yp}), Activation::kSigmoid);
  Img ry = yp;
  for (std::size_t e = 0; e < ry.v.size(); ++e) ry.v[e] = o.r.v[e] * yp.v[e];
  o.s = net(m.candidate_net, cat({x, ry}), Activation::kTanh);
  o.f = net(m.update_net, cat({x, yp}), Activation::kSigmoid);
  o.y = yp;
  for (std::size_t e = 0; e < o.y.v.size(); ++e) o.y.v[e] = (1 - o.f.v[e]) * yp.v[e] + o.f.v[e] * o.s.v[e];
  return o;
}

}  // namespace gruvd::test
