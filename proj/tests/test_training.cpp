// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "gruvd/errors.hpp"
#include "gruvd/serialize.hpp"
#include "gruvd/training.hpp"
#include "test_util.hpp"

using namespace gruvd;
using gruvd::test::random_tensor;
using gruvd::test::read_bytes;
using gruvd::test::scratch_dir;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.hidden_channels = 4;
  c.num_blocks = 2;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.seq_len = 3;
  t.patch = 12;
  t.batch = 2;
  t.max_epochs = 6;
  t.seed = 5;
  return t;
}

std::vector<TensorD> tiny_scenes() {
  std::vector<TensorD> scenes;
  for (std::uint64_t s = 0; s < 2; ++s) {
    SyntheticSceneSpec spec;
    spec.height = 16;
    spec.width = 16;
    spec.frames = 5;
    spec.texture_seed = s;
    scenes.push_back(generate_scene(spec));
  }
  return scenes;
}

SyntheticProvider tiny_provider(const TrainConfig& t) {
  return SyntheticProvider(tiny_scenes(), default_profile(),
                           BatchRequest{{}, t.patch, t.seq_len, t.batch, t.seed});
}

}  // namespace

TEST_CASE("weighted L1 loss against a direct sum") {
  const TensorD y(Shape{1, 1, 1, 4}, {0.1, 0.5, 0.9, 0.2});
  const TensorD s(Shape{1, 1, 1, 4}, {0.0, 0.4, 1.0, 0.2});
  const TensorD t(Shape{1, 1, 1, 4}, {0.2, 0.2, 0.6, 0.4});
  // mean|y-t| = (0.1+0.3+0.3+0.2)/4 = 0.225; mean|s-t| = (0.2+0.2+0.4+0.2)/4 = 0.25
  CHECK(weighted_l1_loss(y, s, t, 0.1, 1.0).item() == doctest::Approx(0.1 * 0.225 + 0.25).epsilon(1e-14));
  CHECK(weighted_l1_loss(y, s, t, 0.0, 0.0).item() == 0.0);
}

TEST_CASE("sequence loss averages frames") {
  std::vector<CellOutput<double>> outs(3);
  std::vector<TensorD> targets;
  double expected = 0, fusion = 0, init = 0;
  for (std::size_t t = 0; t < 3; ++t) {
    outs[t].y = random_tensor(Shape{2, 1, 3, 3}, 10 + t);
    outs[t].s = random_tensor(Shape{2, 1, 3, 3}, 20 + t);
    targets.push_back(random_tensor(Shape{2, 1, 3, 3}, 30 + t));
    double fy = 0, fs = 0;
    for (std::size_t i = 0; i < 18; ++i) {
      fy += std::abs(outs[t].y.data()[i] - targets[t].data()[i]);
      fs += std::abs(outs[t].s.data()[i] - targets[t].data()[i]);
    }
    expected += (0.3 * fy / 18 + 0.7 * fs / 18) / 3;
    fusion += fy / 18 / 3;
    init += fs / 18 / 3;
  }
  const auto l = sequence_loss<double>(outs, targets, 0.3, 0.7);
  CHECK(l.total.item() == doctest::Approx(expected).epsilon(1e-13));
  CHECK(l.fusion == doctest::Approx(fusion).epsilon(1e-13));
  CHECK(l.initial == doctest::Approx(init).epsilon(1e-13));
  CHECK_THROWS(sequence_loss<double>(outs, std::span<const TensorD>(targets).first(2), 0.3, 0.7));
}

TEST_CASE("Adam matches a plain implementation") {
  std::vector<double> p{0.5, -1.0, 2.0}, m(3, 0.0), v(3, 0.0);
  std::vector<double> rp = p, rm(3, 0.0), rv(3, 0.0);
  const AdamHyper h{0.9, 0.999, 1e-8};
  for (std::int64_t t = 1; t <= 5; ++t) {
    const std::vector<double> g{0.1 * t, -0.3, 1e-3 / t};
    adam_step<double>(p, g, m, v, t, 1e-2, h, 0.5);
    for (int i = 0; i < 3; ++i) {
      const double gi = 0.5 * g[i];
      rm[i] = 0.9 * rm[i] + 0.1 * gi;
      rv[i] = 0.999 * rv[i] + 0.001 * gi * gi;
      const double mh = rm[i] / (1 - std::pow(0.9, t));
      const double vh = rv[i] / (1 - std::pow(0.999, t));
      rp[i] -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(rp[i]).epsilon(1e-14));
}

TEST_CASE("first Adam step moves each weight by about lr against its gradient") {
  std::vector<double> p{1.0, 1.0}, m(2), v(2);
  const std::vector<double> g{4.0, -0.01};
  adam_step<double>(p, g, m, v, 1, 0.1, {});
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(1.1).epsilon(1e-5));
}

TEST_CASE("optimizer clips by global norm") {
  auto model = build_model<double>(tiny_model(), 1);
  auto a = build_model<double>(tiny_model(), 1);
  // Same loss on both; clipping at half the norm must equal a half-scaled gradient step.
  auto run = [](RecurrentModel<double>& m) {
    const auto x = random_tensor(Shape{1, 1, 6, 6}, 3, 0.0, 1.0);
    const auto d = TensorD::full({1, 1, 6, 6}, 0.1);
    const auto out = m.step(x, d, init_state(random_tensor(Shape{1, 1, 6, 6}, 4, 0.0, 1.0)));
    backward(sum(out.y));
  };
  run(*model);
  AdamOptimizer<double> opt(*model);
  // eps is negligible here so the first step is exactly scale invariant.
  const AdamHyper tiny_eps{0.9, 0.999, 1e-30};
  const double norm = opt.step(*model, 1e-2, tiny_eps, 0.0);
  CHECK(norm > 0.0);

  run(*a);
  AdamOptimizer<double> clipped(*a);
  CHECK(clipped.step(*a, 1e-2, tiny_eps, norm / 2) == doctest::Approx(norm));
  // On the first step Adam is invariant to a uniform gradient scale, so both
  // models move the same way.
  const auto pa = model->parameters(), pb = a->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(gruvd::test::max_abs_diff(pa[i].value.data(), pb[i].value.data()) < 1e-12);
  }
}

TEST_CASE("optimizer clip: scaled gradient reaches the moments") {
  auto model = build_model<double>(tiny_model(), 2);
  const auto x = random_tensor(Shape{1, 1, 6, 6}, 3, 0.0, 1.0);
  const auto out = model->step(x, TensorD::full({1, 1, 6, 6}, 0.1), init_state(x));
  backward(sum(out.y));
  const auto params = model->parameters();
  std::vector<std::vector<double>> g, before;
  double sq = 0;
  for (const auto& p : params) {
    g.emplace_back(p.value.grad().begin(), p.value.grad().end());
    before.emplace_back(p.value.data().begin(), p.value.data().end());
    for (double e : p.value.grad()) sq += e * e;
  }
  const double norm = std::sqrt(sq);
  AdamOptimizer<double> opt(*model);
  const double clip = norm / 4;
  opt.step(*model, 1e-3, {}, clip);
  const auto dir = scratch_dir("adam_moments");
  opt.save(dir / "opt.gvtd");
  const auto stored = load_tensors<double>(dir / "opt.gvtd");
  REQUIRE(stored.size() == 2 * params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < g[i].size(); ++k) {
      // Moments are stored as float32.
      const double expected = 0.1 * g[i][k] * clip / norm;
      CHECK(std::abs(stored[i].data()[k] - expected) <= 1e-7 * std::abs(expected));
    }
  }
}

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.lr0 = 1e-3;
  c.lr_decay_every = 1500;
  c.lr_decay_factor = 10;
  CHECK(learning_rate(c, 0) == doctest::Approx(1e-3));
  CHECK(learning_rate(c, 1499) == doctest::Approx(1e-3));
  CHECK(learning_rate(c, 1500) == doctest::Approx(1e-4));
  CHECK(learning_rate(c, 3000) == doctest::Approx(1e-5));
  c.lr_decay_every = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("with w1 = 0 the update gate receives no gradient on a single frame") {
  auto model = GruVdModel<double>::build(tiny_model(), 3);
  const auto x = random_tensor(Shape{1, 1, 6, 6}, 5, 0.0, 1.0);
  const auto target = random_tensor(Shape{1, 1, 6, 6}, 6, 0.0, 1.0);
  std::vector<CellOutput<double>> outs{model.step(x, TensorD::full({1, 1, 6, 6}, 0.1), init_state(x))};
  std::vector<TensorD> targets{target};
  backward(sequence_loss<double>(outs, targets, 0.0, 1.0).total);
  for (const auto& p : model.parameters()) {
    double g = 0;
    if (p.value.has_grad())
      for (double e : p.value.grad()) g += std::abs(e);
    CAPTURE(p.name);
    if (p.name.rfind("update.", 0) == 0) {
      CHECK(g == 0.0);
    } else if (p.name.find("weight") != std::string::npos) {
      CHECK(g > 0.0);
    }
  }
}

TEST_CASE("training lowers the loss on a tiny problem") {
  auto t = tiny_train();
  t.max_epochs = 40;
  t.lr0 = 3e-3;
  auto model = build_model<double>(tiny_model(), 7);
  auto provider = tiny_provider(t);
  Trainer<double> trainer(*model, provider, t);
  const auto report = trainer.run();
  REQUIRE(report.epochs.size() == 40);
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) {
    first += report.epochs[i].loss;
    last += report.epochs[35 + i].loss;
  }
  CHECK(last < first);
}

TEST_CASE("resume is bit-identical to an uninterrupted run") {
  const auto t = tiny_train();
  const auto dir = scratch_dir("resume");

  auto full_model = build_model<float>(tiny_model(), 11);
  auto full_data = tiny_provider(t);
  Trainer<float> full(*full_model, full_data, t);
  full.run(dir / "full");

  auto half_cfg = t;
  half_cfg.max_epochs = 3;
  auto a_model = build_model<float>(tiny_model(), 11);
  auto a_data = tiny_provider(t);
  Trainer<float> first(*a_model, a_data, half_cfg);
  first.run(dir / "half");

  auto b_model = build_model<float>(tiny_model(), 99);  // different init, overwritten on resume
  auto b_data = tiny_provider(t);
  Trainer<float> second(*b_model, b_data, t);
  second.resume(dir / "half");
  CHECK(second.next_epoch() == 3);
  second.run(dir / "resumed");

  CHECK(read_bytes(dir / "full" / "parameters.gvtd") == read_bytes(dir / "resumed" / "parameters.gvtd"));
  CHECK(read_bytes(dir / "full" / "optimizer.gvtd") == read_bytes(dir / "resumed" / "optimizer.gvtd"));
  CHECK(read_bytes(dir / "full" / "state.json") == read_bytes(dir / "resumed" / "state.json"));

  auto wider = tiny_model();
  wider.hidden_channels = 6;
  auto c_model = build_model<float>(wider, 11);
  Trainer<float> mismatched(*c_model, b_data, t);
  CHECK_THROWS_AS(mismatched.resume(dir / "half"), ConfigError);
}

TEST_CASE("model checkpoints round trip") {
  const auto dir = scratch_dir("model_io");
  ModelConfig cfg = tiny_model();
  cfg.kind = ModelKind::kGru;
  cfg.block_kind = BlockKind::kDistill;
  const auto model = build_model<float>(cfg, 4);
  save_model(dir, *model);
  const auto back = load_model<float>(dir);
  CHECK(back->config() == cfg);
  const auto a = model->parameters(), b = back->parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(std::equal(a[i].value.data().begin(), a[i].value.data().end(), b[i].value.data().begin()));
  }
  CHECK_THROWS_AS(load_model<float>(dir / "missing"), IoError);
}

TEST_CASE("non-finite loss and exhausted data are reported") {
  auto t = tiny_train();
  auto scenes = tiny_scenes();
  auto batch = make_batch(scenes, default_profile(), {{}, t.patch, t.seq_len, t.batch, 1});
  batch.noisy.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  FixedProvider bad({batch});
  auto model = build_model<float>(tiny_model(), 1);
  Trainer<float> trainer(*model, bad, t);
  CHECK_THROWS_AS(trainer.run_epoch(), NumericError);

  FixedProvider empty({});
  Trainer<float> starved(*model, empty, t);
  CHECK_THROWS_AS(starved.run_epoch(), IoError);
}

TEST_CASE("train config JSON") {
  TrainConfig c = tiny_train();
  const nlohmann::json j = c;
  TrainConfig back;
  from_json(j, back);
  CHECK(back == c);
  TrainConfig overlay = c;
  from_json(nlohmann::json::parse(R"({"lr0": 0.01})"), overlay);
  CHECK(overlay.lr0 == 0.01);
  CHECK(overlay.patch == c.patch);
  CHECK_THROWS_AS(from_json(nlohmann::json::parse(R"({"learning_rate": 0.01})"), overlay), ConfigError);
  TrainConfig bad;
  bad.w1 = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("train log CSV") {
  TrainReport r;
  r.epochs.push_back({0, 0.5, 0.25, 0.125, 1e-3, 0.01, 1.0});
  std::ostringstream os;
  r.write_csv(os);
  CHECK(os.str().rfind("epoch,loss,loss_fusion,loss_init,lr,seconds\n", 0) == 0);
  CHECK(os.str().find("\n0,0.5,0.25,0.125,") != std::string::npos);
}
