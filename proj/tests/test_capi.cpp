// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Exercises the shared library through its C header only.

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "gruvd/gruvd.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("gruvd_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kSmallModel = R"({"hidden_channels": 4, "num_blocks": 2})";

}  // namespace

TEST_CASE("null handles and bad JSON map to status codes") {
  CHECK(gruvd_sequence_create(1, 1, 2, 2, nullptr, nullptr) == GRUVD_ERR_USAGE);
  gruvd_model* m = nullptr;
  CHECK(gruvd_model_create("{not json", 0, &m) == GRUVD_ERR_CONFIG);
  CHECK(m == nullptr);
  CHECK(std::strlen(gruvd_last_error()) > 0);
  CHECK(gruvd_model_create(R"({"channels": 2})", 0, &m) == GRUVD_ERR_CONFIG);
  gruvd_sequence* s = nullptr;
  CHECK(gruvd_sequence_read("/nonexistent/x.gvsq", &s) == GRUVD_ERR_IO);
  CHECK(gruvd_sequence_create(0, 1, 2, 2, nullptr, &s) != GRUVD_OK);
  gruvd_model_free(nullptr);
  gruvd_sequence_free(nullptr);
  gruvd_string_free(nullptr);
  CHECK(std::string(gruvd_version()).size() > 0);
}

TEST_CASE("sequence lifecycle") {
  std::vector<float> data(2 * 1 * 3 * 4);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(i) / 23.0f;
  gruvd_sequence* s = nullptr;
  REQUIRE(gruvd_sequence_create(2, 1, 3, 4, data.data(), &s) == GRUVD_OK);
  size_t dims[4];
  REQUIRE(gruvd_sequence_shape(s, dims) == GRUVD_OK);
  CHECK(dims[0] == 2);
  CHECK(dims[3] == 4);
  const auto dir = scratch("seq");
  REQUIRE(gruvd_sequence_write(s, (dir / "a.gvsq").string().c_str()) == GRUVD_OK);
  gruvd_sequence* back = nullptr;
  REQUIRE(gruvd_sequence_read((dir / "a.gvsq").string().c_str(), &back) == GRUVD_OK);
  std::vector<float> out(data.size());
  REQUIRE(gruvd_sequence_data(back, out.data(), out.size()) == GRUVD_OK);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(std::abs(out[i] - data[i]) <= 0.5f / 65535 + 1e-7f);
  CHECK(gruvd_sequence_write_frame(s, 1, (dir / "f.pgm").string().c_str(), 8) == GRUVD_OK);
  CHECK(fs::file_size(dir / "f.pgm") == std::string("P5\n4 3\n255\n").size() + 12);
  CHECK(gruvd_sequence_write_frame(s, 2, (dir / "g.pgm").string().c_str(), 8) != GRUVD_OK);
  gruvd_sequence_free(s);
  gruvd_sequence_free(back);
}

TEST_CASE("noise and profile lookup") {
  double a = 0, b = 0;
  REQUIRE(gruvd_profile_lookup(nullptr, 1600, &a, &b) == GRUVD_OK);
  CHECK(a > 0);
  double a2 = 0, b2 = 0;
  REQUIRE(gruvd_profile_lookup(nullptr, 6400, &a2, &b2) == GRUVD_OK);
  CHECK(a2 > a);
  CHECK(b2 > b);
  CHECK(gruvd_profile_lookup(R"({"name":"e","table":[]})", 1600, &a, &b) == GRUVD_ERR_CONFIG);

  std::vector<float> flat(4 * 64 * 64, 0.5f);
  gruvd_sequence* clean = nullptr;
  REQUIRE(gruvd_sequence_create(4, 1, 64, 64, flat.data(), &clean) == GRUVD_OK);
  gruvd_sequence *n1 = nullptr, *n2 = nullptr;
  REQUIRE(gruvd_noise(clean, 0.0, 1e-4, 3, 0, &n1) == GRUVD_OK);
  REQUIRE(gruvd_noise(clean, 0.0, 1e-4, 3, 0, &n2) == GRUVD_OK);
  std::vector<float> v1(flat.size()), v2(flat.size());
  gruvd_sequence_data(n1, v1.data(), v1.size());
  gruvd_sequence_data(n2, v2.data(), v2.size());
  CHECK(v1 == v2);
  double var = 0;
  for (float e : v1) var += (e - 0.5) * (e - 0.5);
  var /= static_cast<double>(v1.size());
  CHECK(std::abs(var - 1e-4) / 1e-4 < 0.1);
  double psnr = 0, ssim = 0;
  REQUIRE(gruvd_metrics(n1, clean, 1.0, &psnr, &ssim) == GRUVD_OK);
  CHECK(psnr == doctest::Approx(40.0).epsilon(0.01));
  CHECK(gruvd_noise(clean, -1.0, 0.0, 3, 0, &n2) == GRUVD_ERR_CONFIG);
  gruvd_sequence_free(n1);
  gruvd_sequence_free(n2);
  gruvd_sequence_free(clean);
}

TEST_CASE("model create, save, load, denoise") {
  gruvd_model* m = nullptr;
  REQUIRE(gruvd_model_create(kSmallModel, 5, &m) == GRUVD_OK);
  char* info = nullptr;
  REQUIRE(gruvd_model_info(m, &info) == GRUVD_OK);
  CHECK(std::string(info).find("\"hidden_channels\": 4") != std::string::npos);
  gruvd_string_free(info);

  const auto dir = scratch("model");
  REQUIRE(gruvd_model_save(m, dir.string().c_str()) == GRUVD_OK);
  gruvd_model* loaded = nullptr;
  REQUIRE(gruvd_model_load(dir.string().c_str(), &loaded) == GRUVD_OK);

  std::vector<float> frames(3 * 16 * 16);
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = static_cast<float>((i * 37) % 101) / 100.0f;
  gruvd_sequence* noisy = nullptr;
  REQUIRE(gruvd_sequence_create(3, 1, 16, 16, frames.data(), &noisy) == GRUVD_OK);
  gruvd_sequence *y1 = nullptr, *y2 = nullptr, *f = nullptr;
  REQUIRE(gruvd_denoise(m, noisy, 0.01, 1e-3, 0, &y1, nullptr, nullptr, &f) == GRUVD_OK);
  REQUIRE(gruvd_denoise(loaded, noisy, 0.01, 1e-3, 0, &y2, nullptr, nullptr, nullptr) == GRUVD_OK);
  std::vector<float> a(frames.size()), b(frames.size()), fv(frames.size());
  gruvd_sequence_data(y1, a.data(), a.size());
  gruvd_sequence_data(y2, b.data(), b.size());
  gruvd_sequence_data(f, fv.data(), fv.size());
  CHECK(a == b);
  for (float e : fv) CHECK((e > 0.0f && e < 1.0f));

  gruvd_sequence* rgb = nullptr;
  std::vector<float> three(3 * 16 * 16 * 3, 0.5f);
  REQUIRE(gruvd_sequence_create(3, 3, 16, 16, three.data(), &rgb) == GRUVD_OK);
  gruvd_sequence* bad = nullptr;
  CHECK(gruvd_denoise(m, rgb, 0.01, 1e-3, 0, &bad, nullptr, nullptr, nullptr) == GRUVD_ERR_CONFIG);
  CHECK(gruvd_model_load((dir / "missing").string().c_str(), &loaded) == GRUVD_ERR_IO);

  for (auto* s : {noisy, y1, y2, f, rgb}) gruvd_sequence_free(s);
  gruvd_model_free(m);
  gruvd_model_free(loaded);
}

namespace {
int stop_after_two(const gruvd_epoch_info* info, void* user) {
  ++*static_cast<int*>(user);
  return info->epoch >= 1;
}
}  // namespace

TEST_CASE("synth, train with a callback, evaluate") {
  const auto dir = scratch("pipeline");
  const std::string manifest = R"({"sequences": [
    {"scene": {"height": 24, "width": 24, "frames": 4, "texture_seed": 1}, "iso": 3200, "seed": 7},
    {"scene": {"height": 24, "width": 24, "frames": 4, "texture_seed": 2}, "iso": 6400, "seed": 8}]})";
  REQUIRE(gruvd_synth(manifest.c_str(), (dir / "data").string().c_str()) == GRUVD_OK);
  CHECK(fs::exists(dir / "data" / "manifest.json"));
  const std::string manifest_path = (dir / "data" / "manifest.json").string();

  int calls = 0;
  const char* train_cfg = R"({"max_epochs": 5, "patch": 16, "seq_len": 3, "batch": 2})";
  REQUIRE(gruvd_train(manifest_path.c_str(), kSmallModel, train_cfg, 1, (dir / "ck").string().c_str(), 0,
                      &stop_after_two, &calls) == GRUVD_OK);
  CHECK(calls == 2);
  CHECK(fs::exists(dir / "ck" / "parameters.gvtd"));
  CHECK(fs::exists(dir / "ck" / "train_log.csv"));

  gruvd_model* m = nullptr;
  REQUIRE(gruvd_model_load((dir / "ck").string().c_str(), &m) == GRUVD_OK);
  char *csv = nullptr, *table = nullptr;
  REQUIRE(gruvd_evaluate(m, nullptr, manifest_path.c_str(), "fused,s_only", 1.0, &csv, &table, nullptr) ==
          GRUVD_OK);
  const std::string text(csv);
  CHECK(text.rfind("variant,psnr_mean,ssim_mean,frames\nnoisy,", 0) == 0);
  CHECK(text.find("\nfused,") != std::string::npos);
  CHECK(gruvd_evaluate(m, nullptr, manifest_path.c_str(), "gru_baseline", 1.0, nullptr, nullptr, nullptr) ==
        GRUVD_ERR_CONFIG);
  gruvd_string_free(csv);
  gruvd_string_free(table);
  gruvd_model_free(m);

  CHECK(gruvd_train((dir / "none.json").string().c_str(), nullptr, nullptr, 0, (dir / "ck2").string().c_str(),
                    0, nullptr, nullptr) == GRUVD_ERR_IO);
}

TEST_CASE("gradcheck through the C API") {
  double err = 1;
  char* report = nullptr;
  REQUIRE(gruvd_gradcheck(R"({"seq_len": 2})", &err, &report) == GRUVD_OK);
  CHECK(err < 1e-4);
  CHECK(std::string(report).find("reset.head.weight") != std::string::npos);
  gruvd_string_free(report);
  CHECK(gruvd_gradcheck(R"({"seq_len": 2, "inject_fault": true})", &err, &report) == GRUVD_ERR_NUMERIC);
  CHECK(err > 1e-4);
  gruvd_string_free(report);
}
