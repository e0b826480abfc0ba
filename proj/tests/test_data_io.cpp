// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "gruvd/data_io.hpp"
#include "gruvd/errors.hpp"
#include "test_util.hpp"

using namespace gruvd;
using gruvd::test::max_abs_diff;
using gruvd::test::random_tensor;
using gruvd::test::read_bytes;
using gruvd::test::scratch_dir;

namespace {

void write_raw(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

std::string parse_error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("quantize rounds half up and clamps") {
  CHECK(quantize(0.0, 255) == 0);
  CHECK(quantize(1.0, 255) == 255);
  CHECK(quantize(0.5, 255) == 128);
  CHECK(quantize(0.5, 65535) == 32768);
  CHECK(quantize(-0.2, 255) == 0);
  CHECK(quantize(7.0, 65535) == 65535);
  CHECK(quantize(1.49 / 255, 255) == 1);
  CHECK(quantize(1.5 / 255, 255) == 2);
}

TEST_CASE("frame round trips stay within half a quantization step") {
  const auto dir = scratch_dir("frames");
  for (std::size_t c : {1u, 3u}) {
    const auto frame = random_tensor(Shape{c, 7, 5}, 3 + c, 0.0, 1.0);
    for (int bits : {8, 16}) {
      const auto path = dir / ("f" + std::to_string(c) + "_" + std::to_string(bits) + ".pnm");
      write_frame(path, frame, bits);
      const auto back = read_frame(path);
      CHECK(back.shape() == frame.shape());
      const double step = bits == 8 ? 255.0 : 65535.0;
      CHECK(max_abs_diff(back.data(), frame.data()) <= 0.5 / step + 1e-15);
    }
  }
  CHECK_THROWS_AS(write_frame(dir / "x.pgm", TensorD::zeros({2, 3, 3})), ShapeError);
  CHECK_THROWS_AS(write_frame(dir / "x.pgm", TensorD::zeros({1, 3, 3}), 12), ConfigError);
}

TEST_CASE("16-bit PGM layout is big-endian") {
  const auto dir = scratch_dir("pgm_layout");
  write_frame(dir / "a.pgm", TensorD(Shape{1, 1, 2}, {1.0, 258.0 / 65535.0}), 16);
  const std::string expected = std::string("P5\n2 1\n65535\n") + "\xff\xff\x01\x02";
  CHECK(read_bytes(dir / "a.pgm") == expected);
}

TEST_CASE("PGM headers with comments parse") {
  const auto dir = scratch_dir("pgm_comment");
  write_raw(dir / "c.pgm", std::string("P5 # comment\n2 # w\n1\n255\n") + std::string("\x00\xff", 2));
  const auto f = read_frame(dir / "c.pgm");
  CHECK(f.shape() == Shape{1, 1, 2});
  CHECK(f.data()[0] == 0.0);
  CHECK(f.data()[1] == 1.0);
}

TEST_CASE("malformed frames report the byte offset") {
  const auto dir = scratch_dir("pgm_bad");
  write_raw(dir / "magic.pgm", "P2\n1 1\n255\n0");
  CHECK(parse_error_message([&] { read_frame(dir / "magic.pgm"); }).find("at offset 0") != std::string::npos);
  write_raw(dir / "short.pgm", "P5\n4 4\n255\nab");
  CHECK(parse_error_message([&] { read_frame(dir / "short.pgm"); }).find("at offset 13") != std::string::npos);
  write_raw(dir / "maxval.pgm", "P5\n1 1\n0\na");
  CHECK(parse_error_message([&] { read_frame(dir / "maxval.pgm"); }).find("maxval") != std::string::npos);
  write_raw(dir / "width.pgm", "P5\nx 1\n255\na");
  CHECK(parse_error_message([&] { read_frame(dir / "width.pgm"); }).find("at offset 3") != std::string::npos);
  CHECK_THROWS_AS(read_frame(dir / "missing.pgm"), IoError);
}

TEST_CASE("sequence files round trip and reject corruption") {
  const auto dir = scratch_dir("gvsq");
  const auto seq = random_tensor(Shape{3, 3, 4, 5}, 9, 0.0, 1.0);
  write_sequence(dir / "s.gvsq", seq);
  const auto bytes = read_bytes(dir / "s.gvsq");
  CHECK(bytes.size() == 20 + 2 * seq.numel());
  CHECK(bytes.substr(0, 4) == "GVSQ");
  CHECK(bytes[4] == 3);
  const auto back = read_sequence(dir / "s.gvsq");
  CHECK(back.shape() == seq.shape());
  CHECK(max_abs_diff(back.data(), seq.data()) <= 0.5 / 65535 + 1e-15);
  // Writing the decoded values again is lossless.
  write_sequence(dir / "t.gvsq", back);
  CHECK(read_bytes(dir / "t.gvsq") == bytes);

  write_raw(dir / "magic.gvsq", "GVSX" + bytes.substr(4));
  CHECK(parse_error_message([&] { read_sequence(dir / "magic.gvsq"); }).find("at offset 0") != std::string::npos);
  write_raw(dir / "trunc.gvsq", bytes.substr(0, bytes.size() - 1));
  CHECK(parse_error_message([&] { read_sequence(dir / "trunc.gvsq"); }).find("truncated") != std::string::npos);
  write_raw(dir / "hdr.gvsq", bytes.substr(0, 10));
  CHECK_THROWS_AS(read_sequence(dir / "hdr.gvsq"), ParseError);
  std::string zero = bytes;
  zero[8] = zero[9] = zero[10] = zero[11] = 0;
  write_raw(dir / "zero.gvsq", zero);
  CHECK(parse_error_message([&] { read_sequence(dir / "zero.gvsq"); }).find("at offset 8") != std::string::npos);
}

TEST_CASE("drifting texture translates by whole pixels") {
  SyntheticSceneSpec spec;
  spec.height = 20;
  spec.width = 24;
  spec.frames = 4;
  spec.motion_px_per_frame = 1.0;
  spec.direction_deg = 0.0;
  const auto seq = generate_scene(spec);
  CHECK(seq.shape() == Shape{4, 1, 20, 24});
  const auto v = seq.data();
  for (std::size_t t = 0; t + 1 < 4; ++t) {
    for (std::size_t i = 0; i < 20; ++i) {
      for (std::size_t j = 0; j + 1 < 24; ++j) {
        CHECK(v[((t + 1) * 20 + i) * 24 + j] == doctest::Approx(v[(t * 20 + i) * 24 + j + 1]).epsilon(1e-12));
      }
    }
  }
  for (double e : v) {
    CHECK(e >= 0.05 - 1e-12);
    CHECK(e <= 0.95 + 1e-12);
  }
}

TEST_CASE("scenes are deterministic and static scenes do not move") {
  SyntheticSceneSpec spec;
  spec.kind = SceneKind::kStatic;
  spec.channels = 3;
  spec.height = spec.width = 16;
  spec.frames = 3;
  spec.texture_seed = 4;
  const auto a = generate_scene(spec), b = generate_scene(spec);
  CHECK(max_abs_diff(a.data(), b.data()) == 0.0);
  const std::size_t n = 3 * 16 * 16;
  for (std::size_t i = 0; i < n; ++i) CHECK(a.data()[i] == a.data()[2 * n + i]);
  spec.texture_seed = 5;
  CHECK(max_abs_diff(generate_scene(spec).data(), a.data()) > 0.0);

  spec.kind = SceneKind::kMovingShapes;
  const auto shapes = generate_scene(spec);
  CHECK(max_abs_diff(std::span(shapes.data()).first(n), std::span(shapes.data()).subspan(2 * n)) > 0.0);
  spec.frames = 0;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
}

TEST_CASE("frame helpers") {
  const auto seq = random_tensor(Shape{4, 3, 2, 2}, 1);
  std::vector<TensorD> frames;
  for (std::size_t t = 0; t < 4; ++t) {
    frames.push_back(sequence_frame(seq, t));
    CHECK(frames.back().shape() == Shape{1, 3, 2, 2});
  }
  CHECK(max_abs_diff(stack_frames(frames).data(), seq.data()) == 0.0);
  CHECK_THROWS_AS(sequence_frame(seq, 4), ShapeError);
}

TEST_CASE("noise map uses the channel-mean intensity") {
  const TensorD x(Shape{1, 3, 1, 2}, {0.1, 0.4, 0.2, 0.5, 0.6, 0.9});
  const auto d = noise_map({0.5, 0.01}, x);
  CHECK(d.shape() == Shape{1, 1, 1, 2});
  CHECK(d.data()[0] == doctest::Approx(std::sqrt(0.5 * 0.3 + 0.01)).epsilon(1e-14));
  CHECK(d.data()[1] == doctest::Approx(std::sqrt(0.5 * 0.6 + 0.01)).epsilon(1e-14));
}

TEST_CASE("batches: shapes, noise map consistency, determinism") {
  SyntheticSceneSpec spec;
  spec.height = spec.width = 24;
  spec.frames = 6;
  std::vector<TensorD> scenes{generate_scene(spec)};
  spec.texture_seed = 1;
  scenes.push_back(generate_scene(spec));
  const BatchRequest req{{3200}, 16, 4, 3, 7};
  const auto a = make_batch(scenes, default_profile(), req);
  CHECK(a.clean.shape() == Shape{3, 4, 1, 16, 16});
  CHECK(a.delta.shape() == Shape{3, 4, 1, 16, 16});
  REQUIRE(a.params.size() == 3);
  CHECK(a.params[0] == lookup_iso(default_profile(), 3200));
  for (std::size_t t = 0; t < 4; ++t) {
    const auto x = frame_at(a.noisy, t);
    const auto d = frame_at(a.delta, t);
    for (std::size_t n = 0; n < 3; ++n) {
      const auto xv = x.data().subspan(n * 256, 256);
      for (std::size_t i = 0; i < 256; ++i) {
        CHECK(d.data()[n * 256 + i] ==
              doctest::Approx(std::sqrt(std::max(a.params[n].a * xv[i] + a.params[n].b, 0.0))).epsilon(1e-14));
      }
    }
  }
  const auto b = make_batch(scenes, default_profile(), req);
  CHECK(max_abs_diff(a.noisy.data(), b.noisy.data()) == 0.0);

  SyntheticProvider p(scenes, default_profile(), req);
  const auto e3 = p.batch_for_epoch(3), e4 = p.batch_for_epoch(4), again = p.batch_for_epoch(3);
  CHECK(max_abs_diff(e3->noisy.data(), again->noisy.data()) == 0.0);
  CHECK(max_abs_diff(e3->noisy.data(), e4->noisy.data()) > 0.0);

  CHECK_THROWS_AS(make_batch(scenes, default_profile(), {{}, 32, 4, 1, 0}), ConfigError);
  CHECK_THROWS_AS(make_batch(scenes, default_profile(), {{}, 16, 9, 1, 0}), ConfigError);
}

TEST_CASE("manifests and synthetic datasets") {
  const auto dir = scratch_dir("manifest");
  Manifest m;
  m.profile = default_profile();
  for (int i = 0; i < 2; ++i) {
    ManifestEntry e;
    e.scene.height = e.scene.width = 12;
    e.scene.frames = 3;
    e.scene.texture_seed = static_cast<std::uint64_t>(i);
    e.iso = 6400;
    e.seed = 100 + i;
    m.sequences.push_back(e);
  }
  const auto written = synthesize_dataset(dir, m);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const auto back = read_manifest(dir / "manifest.json");
  REQUIRE(back.sequences.size() == 2);
  CHECK(back.sequences[1].scene == m.sequences[1].scene);
  CHECK(back.sequences[1].seed == 101);
  CHECK(!back.sequences[0].file.empty());
  const auto clean = load_clean_sequences(dir / "manifest.json", back);
  CHECK(max_abs_diff(clean[1].data(), generate_scene(m.sequences[1].scene).data()) <= 0.5 / 65535 + 1e-15);

  const auto again = scratch_dir("manifest2");
  synthesize_dataset(again, m);
  CHECK(read_bytes(again / "manifest.json") == read_bytes(dir / "manifest.json"));
  CHECK(read_bytes(again / back.sequences[0].file) == read_bytes(dir / back.sequences[0].file));

  write_raw(dir / "bad.json", "{\"sequences\": 3}");
  CHECK_THROWS_AS(read_manifest(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(read_manifest(dir / "nope.json"), IoError);
}
