// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include "gruvd/gruvd.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gruvd/data_io.hpp"
#include "gruvd/errors.hpp"
#include "gruvd/evaluation.hpp"
#include "gruvd/gradcheck.hpp"
#include "gruvd/noise.hpp"
#include "gruvd/training.hpp"

struct gruvd_model {
  std::unique_ptr<gruvd::RecurrentModel<float>> impl;
};

struct gruvd_sequence {
  gruvd::TensorD data;  // [T,C,H,W]
};

namespace {

using namespace gruvd;

thread_local std::string g_last_error;

gruvd_status fail(gruvd_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename F>
gruvd_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const ConfigError& e) {
    return fail(GRUVD_ERR_CONFIG, e.what());
  } catch (const IoError& e) {  // includes ParseError
    return fail(GRUVD_ERR_IO, e.what());
  } catch (const NumericError& e) {
    return fail(GRUVD_ERR_NUMERIC, e.what());
  } catch (const ShapeError& e) {
    return fail(GRUVD_ERR_SHAPE, e.what());
  } catch (const UsageError& e) {
    return fail(GRUVD_ERR_USAGE, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(GRUVD_ERR_CONFIG, std::string("invalid JSON: ") + e.what());
  } catch (const std::exception& e) {
    return fail(GRUVD_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(GRUVD_ERR_INTERNAL, "unknown error");
  }
}

#define GRUVD_REQUIRE(cond, what) \
  if (!(cond)) return fail(GRUVD_ERR_USAGE, what)

nlohmann::json parse_json(const char* text) {
  if (text == nullptr || *text == '\0') return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("cannot parse JSON: ") + e.what());
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

gruvd_sequence* wrap(TensorD t) { return new gruvd_sequence{std::move(t)}; }

}  // namespace

extern "C" {

const char* gruvd_version(void) { return "0.1.0"; }

const char* gruvd_last_error(void) { return g_last_error.c_str(); }

void gruvd_string_free(char* s) { std::free(s); }

void gruvd_set_threads(int n) {
#ifdef _OPENMP
  static const int default_threads = omp_get_max_threads();
  omp_set_num_threads(n > 0 ? n : default_threads);
#else
  (void)n;
#endif
}

gruvd_status gruvd_sequence_create(size_t frames, size_t channels, size_t height, size_t width,
                                   const float* data, gruvd_sequence** out) {
  GRUVD_REQUIRE(out != nullptr, "gruvd_sequence_create: out is NULL");
  return guarded([&] {
    if (frames == 0 || channels == 0 || height == 0 || width == 0) {
      throw ConfigError("sequence dimensions must be positive");
    }
    const Shape shape{frames, channels, height, width};
    std::vector<double> v(shape_numel(shape), 0.0);
    if (data != nullptr) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = data[i];
    }
    *out = wrap(TensorD(shape, std::move(v)));
    return GRUVD_OK;
  });
}

gruvd_status gruvd_sequence_read(const char* path, gruvd_sequence** out) {
  GRUVD_REQUIRE(path != nullptr && out != nullptr, "gruvd_sequence_read: NULL argument");
  return guarded([&] {
    *out = wrap(read_sequence(path));
    return GRUVD_OK;
  });
}

gruvd_status gruvd_sequence_write(const gruvd_sequence* seq, const char* path) {
  GRUVD_REQUIRE(seq != nullptr && path != nullptr, "gruvd_sequence_write: NULL argument");
  return guarded([&] {
    write_sequence(path, seq->data);
    return GRUVD_OK;
  });
}

gruvd_status gruvd_sequence_shape(const gruvd_sequence* seq, size_t dims[4]) {
  GRUVD_REQUIRE(seq != nullptr && dims != nullptr, "gruvd_sequence_shape: NULL argument");
  for (int i = 0; i < 4; ++i) dims[i] = seq->data.dim(static_cast<std::size_t>(i));
  return GRUVD_OK;
}

gruvd_status gruvd_sequence_data(const gruvd_sequence* seq, float* out, size_t capacity) {
  GRUVD_REQUIRE(seq != nullptr && out != nullptr, "gruvd_sequence_data: NULL argument");
  const auto v = seq->data.data();
  if (capacity < v.size()) {
    return fail(GRUVD_ERR_SHAPE, "gruvd_sequence_data: capacity " + std::to_string(capacity) +
                                     " < " + std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return GRUVD_OK;
}

gruvd_status gruvd_sequence_write_frame(const gruvd_sequence* seq, size_t t, const char* path,
                                        int bits) {
  GRUVD_REQUIRE(seq != nullptr && path != nullptr, "gruvd_sequence_write_frame: NULL argument");
  return guarded([&] {
    if (t >= seq->data.dim(0)) {
      throw ConfigError("frame " + std::to_string(t) + " out of range");
    }
    write_frame(path, sequence_frame(seq->data, t), bits);
    return GRUVD_OK;
  });
}

void gruvd_sequence_free(gruvd_sequence* seq) { delete seq; }

gruvd_status gruvd_profile_lookup(const char* profile_json, int iso, double* a, double* b) {
  GRUVD_REQUIRE(a != nullptr && b != nullptr, "gruvd_profile_lookup: NULL output");
  return guarded([&] {
    SensorProfile profile = default_profile();
    if (profile_json != nullptr && *profile_json != '\0') {
      profile = parse_json(profile_json).get<SensorProfile>();
    }
    const NoiseParams p = lookup_iso(profile, iso);
    *a = p.a;
    *b = p.b;
    return GRUVD_OK;
  });
}

gruvd_status gruvd_noise(const gruvd_sequence* clean, double a, double b, uint64_t seed, int clip,
                         gruvd_sequence** out) {
  GRUVD_REQUIRE(clean != nullptr && out != nullptr, "gruvd_noise: NULL argument");
  return guarded([&] {
    const NoiseParams p{a, b};
    p.validate();
    NoiseOptions opts;
    opts.clip = clip != 0;
    *out = wrap(add_noise(p, clean->data, seed, opts));
    return GRUVD_OK;
  });
}

gruvd_status gruvd_synth(const char* manifest_json, const char* out_dir) {
  GRUVD_REQUIRE(manifest_json != nullptr && out_dir != nullptr, "gruvd_synth: NULL argument");
  return guarded([&] {
    const Manifest m = parse_json(manifest_json).get<Manifest>();
    synthesize_dataset(out_dir, m);
    return GRUVD_OK;
  });
}

gruvd_status gruvd_model_create(const char* model_config_json, uint64_t seed, gruvd_model** out) {
  GRUVD_REQUIRE(out != nullptr, "gruvd_model_create: out is NULL");
  return guarded([&] {
    const ModelConfig cfg = parse_json(model_config_json).get<ModelConfig>();
    cfg.validate();
    *out = new gruvd_model{build_model<float>(cfg, seed)};
    return GRUVD_OK;
  });
}

gruvd_status gruvd_model_load(const char* dir, gruvd_model** out) {
  GRUVD_REQUIRE(dir != nullptr && out != nullptr, "gruvd_model_load: NULL argument");
  return guarded([&] {
    *out = new gruvd_model{load_model<float>(dir)};
    return GRUVD_OK;
  });
}

gruvd_status gruvd_model_save(const gruvd_model* model, const char* dir) {
  GRUVD_REQUIRE(model != nullptr && dir != nullptr, "gruvd_model_save: NULL argument");
  return guarded([&] {
    save_model(dir, *model->impl);
    return GRUVD_OK;
  });
}

gruvd_status gruvd_model_info(const gruvd_model* model, char** json_out) {
  GRUVD_REQUIRE(model != nullptr && json_out != nullptr, "gruvd_model_info: NULL argument");
  return guarded([&] {
    nlohmann::json j{{"kind", to_string(model->impl->kind())},
                     {"model", model->impl->config()},
                     {"parameter_count", model->impl->parameter_count()}};
    *json_out = copy_string(j.dump(2));
    return GRUVD_OK;
  });
}

void gruvd_model_free(gruvd_model* model) { delete model; }

gruvd_status gruvd_denoise(const gruvd_model* model, const gruvd_sequence* noisy, double a,
                           double b, int spatial_only, gruvd_sequence** y, gruvd_sequence** s,
                           gruvd_sequence** r, gruvd_sequence** f) {
  GRUVD_REQUIRE(model != nullptr && noisy != nullptr, "gruvd_denoise: NULL argument");
  return guarded([&] {
    const NoiseParams p{a, b};
    p.validate();
    auto out = denoise_sequence(*model->impl, noisy->data, p, spatial_only != 0);
    if (y != nullptr) *y = wrap(std::move(out.y));
    if (s != nullptr) *s = wrap(std::move(out.s));
    if (r != nullptr) *r = wrap(std::move(out.r));
    if (f != nullptr) *f = wrap(std::move(out.f));
    return GRUVD_OK;
  });
}

gruvd_status gruvd_train(const char* manifest_path, const char* model_config_json,
                         const char* train_config_json, uint64_t model_seed,
                         const char* checkpoint_dir, int resume, gruvd_epoch_callback callback,
                         void* user) {
  GRUVD_REQUIRE(manifest_path != nullptr && checkpoint_dir != nullptr,
                "gruvd_train: NULL argument");
  return guarded([&] {
    namespace fs = std::filesystem;
    const fs::path dir(checkpoint_dir);
    const nlohmann::json model_overlay = parse_json(model_config_json);
    const nlohmann::json train_overlay = parse_json(train_config_json);

    ModelConfig mcfg;
    TrainConfig tcfg;
    if (resume != 0) {
      std::ifstream in(dir / "model.json");
      if (!in) throw IoError("no checkpoint to resume in " + dir.string());
      mcfg = nlohmann::json::parse(in).at("model").get<ModelConfig>();
      std::ifstream tin(dir / "train_config.json");
      if (!tin) throw IoError("no train_config.json in " + dir.string());
      tcfg = nlohmann::json::parse(tin).get<TrainConfig>();
      if (!model_overlay.empty()) {
        ModelConfig requested = mcfg;
        from_json(model_overlay, requested);
        if (!(requested == mcfg)) {
          throw ConfigError("model config differs from the checkpoint being resumed");
        }
      }
    } else {
      from_json(model_overlay, mcfg);
    }
    from_json(train_overlay, tcfg);
    mcfg.validate();
    tcfg.validate();

    const Manifest manifest = read_manifest(manifest_path);
    auto scenes = load_clean_sequences(manifest_path, manifest);
    for (const auto& s : scenes) {
      if (s.dim(1) != static_cast<std::size_t>(mcfg.channels)) {
        throw ConfigError("dataset has " + std::to_string(s.dim(1)) +
                          " channels, model expects " + std::to_string(mcfg.channels));
      }
    }
    BatchRequest request;
    request.crop = tcfg.patch;
    request.seq_len = tcfg.seq_len;
    request.batch = tcfg.batch;
    request.seed = tcfg.seed;
    SyntheticProvider provider(std::move(scenes), manifest.profile, request);

    auto model = build_model<float>(mcfg, model_seed);
    Trainer<float> trainer(*model, provider, tcfg);
    if (resume != 0) trainer.resume(dir);

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const fs::path log_path = dir / "train_log.csv";
    const bool append = resume != 0 && fs::exists(log_path);
    std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open " + log_path.string());
    if (!append) TrainReport{}.write_csv(log);

    while (trainer.next_epoch() < tcfg.max_epochs) {
      const EpochRecord rec = trainer.run_epoch();
      TrainReport one;
      one.epochs.push_back(rec);
      std::ostringstream row;
      one.write_csv(row);
      const std::string text = row.str();
      log << text.substr(text.find('\n') + 1) << std::flush;
      const std::int64_t done = trainer.next_epoch();
      if (tcfg.checkpoint_every > 0 && done % tcfg.checkpoint_every == 0 &&
          done < tcfg.max_epochs) {
        trainer.save_checkpoint(dir);
      }
      if (callback != nullptr) {
        const gruvd_epoch_info info{rec.epoch, rec.loss, rec.loss_fusion, rec.loss_init, rec.lr,
                                    rec.seconds};
        if (callback(&info, user) != 0) break;
      }
    }
    trainer.save_checkpoint(dir);
    return GRUVD_OK;
  });
}

gruvd_status gruvd_evaluate(const gruvd_model* model, const gruvd_model* baseline,
                            const char* manifest_path, const char* variants, double peak,
                            char** csv_out, char** table_out, char** frames_csv_out) {
  GRUVD_REQUIRE(model != nullptr && manifest_path != nullptr, "gruvd_evaluate: NULL argument");
  return guarded([&] {
    EvalOptions opts;
    if (variants != nullptr && *variants != '\0') opts.variants = parse_variants(variants);
    opts.peak = peak > 0.0 ? peak : 1.0;
    const auto data = load_eval_set(manifest_path);
    const auto report = evaluate<float>(*model->impl, baseline ? baseline->impl.get() : nullptr,
                                        data, opts);
    if (csv_out != nullptr) {
      std::ostringstream os;
      report.write_csv(os);
      *csv_out = copy_string(os.str());
    }
    if (table_out != nullptr) {
      std::ostringstream os;
      report.write_table(os);
      *table_out = copy_string(os.str());
    }
    if (frames_csv_out != nullptr) {
      std::ostringstream os;
      report.write_frames_csv(os);
      *frames_csv_out = copy_string(os.str());
    }
    return GRUVD_OK;
  });
}

gruvd_status gruvd_metrics(const gruvd_sequence* a, const gruvd_sequence* b, double peak,
                           double* psnr_db, double* ssim_value) {
  GRUVD_REQUIRE(a != nullptr && b != nullptr, "gruvd_metrics: NULL argument");
  return guarded([&] {
    if (a->data.shape() != b->data.shape()) {
      throw ShapeError("gruvd_metrics: " + shape_string(a->data.shape()) + " vs " +
                       shape_string(b->data.shape()));
    }
    double p = 0.0, s = 0.0;
    const std::size_t T = a->data.dim(0);
    for (std::size_t t = 0; t < T; ++t) {
      const TensorD fa = sequence_frame(a->data, t), fb = sequence_frame(b->data, t);
      p += psnr(fa, fb, peak);
      if (ssim_value != nullptr) s += ssim(fa, fb, peak);
    }
    if (psnr_db != nullptr) *psnr_db = p / static_cast<double>(T);
    if (ssim_value != nullptr) *ssim_value = s / static_cast<double>(T);
    return GRUVD_OK;
  });
}

gruvd_status gruvd_gradcheck(const char* config_json, double* max_rel_error, char** report_out) {
  return guarded([&] {
    GradcheckConfig cfg;
    from_json(parse_json(config_json), cfg);
    const GradcheckReport report = run_gradcheck(cfg);
    if (max_rel_error != nullptr) *max_rel_error = report.max_rel_error;
    std::ostringstream os;
    report.write(os);
    if (report_out != nullptr) *report_out = copy_string(os.str());
    if (!report.passed) {
      return fail(GRUVD_ERR_NUMERIC, "gradient check failed: max relative error " +
                                         std::to_string(report.max_rel_error));
    }
    return GRUVD_OK;
  });
}

}  // extern "C"
