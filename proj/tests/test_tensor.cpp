// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gruvd/errors.hpp"
#include "gruvd/serialize.hpp"
#include "gruvd/tensor.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gruvd;
using gruvd::test::conv_oracle;
using gruvd::test::max_abs_diff;
using gruvd::test::probe;
using gruvd::test::random_tensor;

namespace {

// Gradients of sum(conv(x) * G) by the same loops: dx and dw scatter G.
void conv_grad_oracle(const TensorD& x, const TensorD& w, const TensorD& g, int stride, int pad,
                      std::vector<double>& dx, std::vector<double>& dw, std::vector<double>& db) {
  const long B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const long Co = w.dim(0), K = w.dim(2);
  const long Ho = g.dim(2), Wo = g.dim(3);
  dx.assign(x.numel(), 0.0);
  dw.assign(w.numel(), 0.0);
  db.assign(Co, 0.0);
  const auto xv = x.data(), wv = w.data(), gv = g.data();
  for (long n = 0; n < B; ++n)
    for (long co = 0; co < Co; ++co)
      for (long oh = 0; oh < Ho; ++oh)
        for (long ow = 0; ow < Wo; ++ow) {
          const double go = gv[((n * Co + co) * Ho + oh) * Wo + ow];
          db[co] += go;
          for (long ci = 0; ci < Ci; ++ci)
            for (long ki = 0; ki < K; ++ki)
              for (long kj = 0; kj < K; ++kj) {
                const long ih = oh * stride - pad + ki, iw = ow * stride - pad + kj;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                const long xi = ((n * Ci + ci) * H + ih) * W + iw;
                const long wi = ((co * Ci + ci) * K + ki) * K + kj;
                dx[xi] += go * wv[wi];
                dw[wi] += go * xv[xi];
              }
        }
}

struct ConvCase {
  std::size_t batch, cin, cout, h, w, k;
  int stride, pad;
};

const ConvCase kConvCases[] = {
    {2, 3, 4, 7, 6, 3, 1, 1}, {1, 1, 1, 5, 5, 3, 1, 0}, {3, 2, 5, 8, 9, 3, 2, 1},
    {2, 4, 3, 6, 6, 1, 1, 0}, {1, 2, 2, 9, 7, 5, 1, 2}, {2, 3, 2, 5, 5, 3, 3, 2},
    {1, 16, 16, 12, 12, 3, 1, 1},
};

}  // namespace

TEST_CASE("conv2d forward matches the nested-loop oracle") {
  std::uint64_t seed = 1;
  for (const auto& c : kConvCases) {
    CAPTURE(c.cin);
    CAPTURE(c.k);
    CAPTURE(c.stride);
    const auto x = random_tensor(Shape{c.batch, c.cin, c.h, c.w}, seed++);
    const auto w = random_tensor(Shape{c.cout, c.cin, c.k, c.k}, seed++);
    const auto b = random_tensor(Shape{c.cout}, seed++);
    const auto got = conv2d(x, w, b, c.stride, c.pad);
    const auto want = conv_oracle(x, w, b, c.stride, c.pad);
    REQUIRE(got.shape() == want.shape());
    CHECK(max_abs_diff(got.data(), want.data()) < 1e-12);
    const auto nobias = conv2d(x, w, TensorD{}, c.stride, c.pad);
    CHECK(max_abs_diff(nobias.data(), conv_oracle(x, w, TensorD{}, c.stride, c.pad).data()) < 1e-12);
  }
}

TEST_CASE("conv2d backward matches the scatter oracle") {
  std::uint64_t seed = 50;
  for (const auto& c : kConvCases) {
    auto x = random_tensor(Shape{c.batch, c.cin, c.h, c.w}, seed++, -1, 1, true);
    auto w = random_tensor(Shape{c.cout, c.cin, c.k, c.k}, seed++, -1, 1, true);
    auto b = random_tensor(Shape{c.cout}, seed++, -1, 1, true);
    auto y = conv2d(x, w, b, c.stride, c.pad);
    const auto g = random_tensor(y.shape(), seed++);
    backward(sum(y * g));
    std::vector<double> dx, dw, db;
    conv_grad_oracle(x, w, g, c.stride, c.pad, dx, dw, db);
    CHECK(max_abs_diff(x.grad(), std::span<const double>(dx)) < 1e-12);
    CHECK(max_abs_diff(w.grad(), std::span<const double>(dw)) < 1e-12);
    CHECK(max_abs_diff(b.grad(), std::span<const double>(db)) < 1e-12);
  }
}

TEST_CASE("conv2d gradients agree with central differences") {
  auto x = random_tensor(Shape{2, 2, 5, 5}, 7);
  auto w = random_tensor(Shape{3, 2, 3, 3}, 8, -1, 1, true);
  auto b = random_tensor(Shape{3}, 9, -1, 1, true);
  CHECK(finite_difference_check<double>([&](const TensorD& in) { return probe(conv2d(in, w, b, 1, 1)); },
                                        x, 1e-6) < 1e-7);
  auto xl = random_tensor(Shape{2, 2, 5, 5}, 7, -1, 1, true);
  CHECK(leaf_gradient_error<double>([&] { return probe(conv2d(xl, w, b, 2, 1)); }, w, 1e-6) < 1e-7);
  CHECK(leaf_gradient_error<double>([&] { return probe(conv2d(xl, w, b, 2, 1)); }, b, 1e-6) < 1e-7);
}

TEST_CASE("conv2d float and double agree") {
  const auto x = random_tensor(Shape{2, 3, 8, 8}, 11);
  const auto w = random_tensor(Shape{4, 3, 3, 3}, 12);
  const auto b = random_tensor(Shape{4}, 13);
  const auto yd = conv2d(x, w, b, 1, 1);
  const auto yf = conv2d(x.cast<float>(), w.cast<float>(), b.cast<float>(), 1, 1);
  CHECK(max_abs_diff(yd.data(), yf.cast<double>().data()) < 1e-5);
}

TEST_CASE("conv2d rejects bad geometry") {
  const auto x = TensorD::zeros({1, 2, 4, 4});
  CHECK_THROWS_AS(conv2d(x, TensorD::zeros({1, 3, 3, 3}), TensorD{}, 1, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(x, TensorD::zeros({1, 2, 2, 2}), TensorD{}, 1, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(x, TensorD::zeros({1, 2, 3, 3}), TensorD::zeros({2}), 1, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(TensorD::zeros({1, 2, 2, 2}), TensorD::zeros({1, 2, 5, 5}), TensorD{}, 1, 0),
                  ShapeError);
  try {
    conv2d(x, TensorD::zeros({1, 3, 3, 3}), TensorD{}, 1, 1);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("broadcasting: same shape, scalar and per-channel") {
  const auto a = random_tensor(Shape{2, 3, 2, 2}, 1);
  const auto s = TensorD::scalar(2.0);
  const auto per_c = TensorD(Shape{1, 3, 1, 1}, {1.0, 2.0, 3.0});
  const auto as = a * s;
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(as.data()[i] == 2.0 * a.data()[i]);
  const auto ac = a + per_c;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 4; ++p) {
        const std::size_t i = (n * 3 + c) * 4 + p;
        CHECK(ac.data()[i] == a.data()[i] + static_cast<double>(c + 1));
      }
  const auto ca = per_c - a;
  CHECK(ca.data()[5] == 2.0 - a.data()[5]);
  try {
    (void)(a + TensorD::zeros({2, 3, 2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3,2,2]") != std::string::npos);
    CHECK(msg.find("[2,3,2,3]") != std::string::npos);
  }
}

TEST_CASE("elementwise ops have correct gradients") {
  auto a = random_tensor(Shape{2, 3, 2, 2}, 21, -1, 1, true);
  auto b = random_tensor(Shape{2, 3, 2, 2}, 22, 0.2, 1, true);
  auto c = random_tensor(Shape{1, 3, 1, 1}, 23, -1, 1, true);
  const double eps = 1e-6;
  CHECK(leaf_gradient_error<double>([&] { return probe(a + b); }, a, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(a - b); }, b, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(a * b); }, a, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(a * c); }, c, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(c - a); }, c, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(abs(b)); }, b, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(scale(a, 3.5)); }, a, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(sigmoid(a)); }, a, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(tanh(a)); }, a, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(relu(b)); }, b, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return mean(a * a); }, a, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return sum(a) * sum(b); }, a, eps) < 1e-5);
}

TEST_CASE("channel ops have correct gradients and values") {
  auto a = random_tensor(Shape{2, 2, 3, 3}, 31, -1, 1, true);
  auto b = random_tensor(Shape{2, 1, 3, 3}, 32, -1, 1, true);
  const auto cat = concat_channels<double>({a, b});
  REQUIRE(cat.shape() == Shape{2, 3, 3, 3});
  CHECK(cat.data()[2 * 9 + 4] == b.data()[4]);
  CHECK(cat.data()[27 + 9 + 1] == a.data()[18 + 9 + 1]);
  const auto sl = slice_channels(cat, 1, 3);
  REQUIRE(sl.shape() == Shape{2, 2, 3, 3});
  CHECK(sl.data()[9] == b.data()[0]);
  const auto bc = broadcast_channels(b, 4);
  REQUIRE(bc.shape() == Shape{2, 4, 3, 3});
  CHECK(bc.data()[3 * 9 + 2] == b.data()[2]);

  const double eps = 1e-6;
  CHECK(leaf_gradient_error<double>([&] { return probe(concat_channels<double>({a, b, a})); }, a, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(slice_channels(concat_channels<double>({a, b}), 1, 3)); }, b, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(broadcast_channels(b, 3)); }, b, eps) < 1e-5);
  CHECK_THROWS_AS(slice_channels(a, 1, 3), ShapeError);
  CHECK_THROWS_AS(concat_channels<double>({a, TensorD::zeros({2, 1, 3, 4})}), ShapeError);
}

TEST_CASE("sigmoid and tanh stay inside the open interval") {
  const TensorD x(Shape{4}, {-1000.0, -40.0, 40.0, 1000.0});
  const auto s = sigmoid(x);
  const auto t = tanh(x);
  for (double v : s.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  for (double v : t.data()) {
    CHECK(v > -1.0);
    CHECK(v < 1.0);
  }
  const TensorF xf(Shape{2}, {-200.0f, 200.0f});
  const auto sf = sigmoid(xf);
  for (float v : sf.data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("blend is convex and differentiable") {
  auto a = random_tensor(Shape{1, 2, 4, 4}, 41, 0, 1, true);
  auto b = random_tensor(Shape{1, 2, 4, 4}, 42, 0, 1, true);
  auto f = random_tensor(Shape{1, 2, 4, 4}, 43, 0.01, 0.99, true);
  const auto y = blend(a, b, f);
  for (std::size_t i = 0; i < y.numel(); ++i) {
    const double lo = std::min(a.data()[i], b.data()[i]), hi = std::max(a.data()[i], b.data()[i]);
    CHECK(y.data()[i] >= lo);
    CHECK(y.data()[i] <= hi);
    CHECK(y.data()[i] == doctest::Approx((1 - f.data()[i]) * a.data()[i] + f.data()[i] * b.data()[i]).epsilon(1e-14));
  }
  const double eps = 1e-6;
  CHECK(leaf_gradient_error<double>([&] { return probe(blend(a, b, f)); }, a, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(blend(a, b, f)); }, b, eps) < 1e-5);
  CHECK(leaf_gradient_error<double>([&] { return probe(blend(a, b, f)); }, f, eps) < 1e-5);
}

TEST_CASE("reused values accumulate gradient once per use") {
  auto x = random_tensor(Shape{5}, 51, -2, 2, true);
  const auto y = sum(x * x + x);  // dy/dx = 2x + 1
  ComputationRecord<double> record(y);
  record.replay_backward();
  for (std::size_t i = 0; i < 5; ++i) CHECK(x.grad()[i] == doctest::Approx(2 * x.data()[i] + 1));
  const auto& order = record.replay_order();
  CHECK(order.size() == record.size());
  CHECK(std::is_sorted(order.rbegin(), order.rend()));
  CHECK(std::adjacent_find(order.begin(), order.end()) == order.end());
}

TEST_CASE("replaying twice accumulates into leaves") {
  auto x = TensorD(Shape{1}, {3.0}, true);
  const auto y = sum(scale(x, 2.0));
  ComputationRecord<double> record(y);
  record.replay_backward();
  CHECK(x.grad()[0] == 2.0);
  record.replay_backward();
  CHECK(x.grad()[0] == 4.0);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("record lists ops in execution order and clear cuts the graph") {
  auto x = TensorD(Shape{2}, {1.0, -1.0}, true);
  auto y = mean(relu(scale(x, 2.0)));
  ComputationRecord<double> record(y);
  CHECK(record.op_names() == std::vector<std::string>{"scale", "relu", "mean"});
  record.clear();
  CHECK(record.size() == 0);
  CHECK_THROWS_AS(backward(y), UsageError);
}

TEST_CASE("no-grad mode produces untracked results") {
  auto x = random_tensor(Shape{3}, 61, -1, 1, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_mode_enabled());
    const auto y = x * x;
    CHECK_FALSE(y.requires_grad());
    CHECK(y.is_leaf());
  }
  CHECK(grad_mode_enabled());
  CHECK((x * x).requires_grad());
}

TEST_CASE("backward needs a tracked scalar") {
  auto x = random_tensor(Shape{3}, 71, -1, 1, true);
  CHECK_THROWS_AS(backward(x * x), UsageError);
  CHECK_THROWS_AS(backward(TensorD::scalar(1.0)), UsageError);
}

TEST_CASE("leaf-only mutation") {
  auto x = random_tensor(Shape{3}, 72, -1, 1, true);
  auto y = x * x;
  CHECK_THROWS_AS(y.mutable_data(), UsageError);
  CHECK_THROWS_AS(y.set_requires_grad(false), UsageError);
  CHECK_NOTHROW(x.mutable_data());
}

TEST_CASE("finite difference helpers validate epsilon") {
  auto x = random_tensor(Shape{3}, 73, -1, 1, true);
  CHECK_THROWS_AS(finite_difference_check<double>([](const TensorD& t) { return sum(t); }, x, 0.0),
                  ConfigError);
  CHECK_THROWS_AS(leaf_gradient_error<double>([&] { return sum(x); }, x, -1.0), ConfigError);
  CHECK(relative_gradient_error(1.0, 1.0) == 0.0);
  CHECK(relative_gradient_error(2.0, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("tensor construction validates sizes") {
  CHECK_THROWS_AS(TensorD(Shape{2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK(TensorD::zeros({2, 3}).numel() == 6);
  CHECK(TensorD::full({2}, 4.0).data()[1] == 4.0);
  CHECK(TensorD::scalar(5.0).item() == 5.0);
  CHECK_THROWS(TensorD::zeros({2}).item());
}

TEST_CASE("GVTD round trip and parse errors") {
  const auto t = random_tensor<float>(Shape{2, 3, 4}, 81);
  std::stringstream ss;
  write_tensor(ss, t);
  const auto back = read_tensor<float>(ss);
  CHECK(back.shape() == t.shape());
  CHECK(max_abs_diff(back.data(), t.data()) == 0.0);

  std::stringstream bad("GVTX\x01\x00\x00\x00");
  try {
    read_tensor<float>(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
  }

  std::stringstream full;
  write_tensor(full, t);
  std::string bytes = full.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_tensor<float>(truncated), ParseError);
}
