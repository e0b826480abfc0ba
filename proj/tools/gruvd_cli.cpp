// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// gruvd command-line tool. Exit codes: 0 ok, 2 configuration, 3 I/O,
// 4 numeric failure (non-finite loss, failed gradient check).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gruvd/gruvd.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct CliFailure {
  int code;
  std::string message;
};

int exit_code(gruvd_status s) {
  switch (s) {
    case GRUVD_OK:
      return 0;
    case GRUVD_ERR_CONFIG:
    case GRUVD_ERR_SHAPE:
    case GRUVD_ERR_USAGE:
      return kExitConfig;
    case GRUVD_ERR_IO:
      return kExitIo;
    case GRUVD_ERR_NUMERIC:
      return kExitNumeric;
    default:
      return 1;
  }
}

void check(gruvd_status s) {
  if (s != GRUVD_OK) throw CliFailure{exit_code(s), gruvd_last_error()};
}

struct Owned {
  char* p = nullptr;
  ~Owned() { gruvd_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

using SeqPtr = std::unique_ptr<gruvd_sequence, decltype(&gruvd_sequence_free)>;
using ModelPtr = std::unique_ptr<gruvd_model, decltype(&gruvd_model_free)>;

SeqPtr seq_ptr(gruvd_sequence* s = nullptr) { return SeqPtr(s, &gruvd_sequence_free); }
ModelPtr model_ptr(gruvd_model* m = nullptr) { return ModelPtr(m, &gruvd_model_free); }

// Relative output paths land under $GRUVD_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& p) {
  const fs::path path(p);
  const char* root = std::getenv("GRUVD_OUTPUT_ROOT");
  if (root != nullptr && *root != '\0' && path.is_relative()) return fs::path(root) / path;
  return path;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliFailure{kExitIo, "cannot open " + path};
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CliFailure{kExitConfig, path + ": " + e.what()};
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliFailure{kExitIo, "cannot open " + path};
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw CliFailure{kExitIo, "cannot write " + path.string()};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliFailure{kExitIo, "cannot create " + dir.string() + ": " + ec.message()};
}

// Noise parameters from --a/--b or --iso [--profile].
struct NoiseFlags {
  std::optional<double> a, b;
  std::optional<int> iso;
  std::string profile;

  void add(CLI::App* cmd) {
    cmd->add_option("--a", a, "Signal-dependent noise coefficient");
    cmd->add_option("--b", b, "Signal-independent noise variance");
    cmd->add_option("--iso", iso, "Look up (a, b) for this ISO");
    cmd->add_option("--profile", profile, "Sensor profile JSON (default: built-in)");
  }

  std::pair<double, double> resolve() const {
    if (iso) {
      if (a || b) throw CliFailure{kExitConfig, "use either --iso or --a/--b"};
      const std::string text = profile.empty() ? "" : read_text(profile);
      double ra = 0, rb = 0;
      check(gruvd_profile_lookup(text.empty() ? nullptr : text.c_str(), *iso, &ra, &rb));
      return {ra, rb};
    }
    if (!a || !b) throw CliFailure{kExitConfig, "noise parameters need --a and --b, or --iso"};
    return {*a, *b};
  }
};

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "drifting_texture";
  int frames = 8;
  int size = 64;
  std::optional<int> height, width;
  int channels = 1;
  double motion = 1.0;
  double direction = 0.0;
  std::vector<double> motion_range;  // empty, or {lo, hi} drawn per sequence
  bool random_direction = false;
  double texture_sigma = 1.5;
  std::uint64_t seed = 0;
  int count = 1;
  int iso = 1600;
  std::optional<double> a, b;
  std::string profile;
  std::string out;
};

int cmd_synth(const SynthArgs& s) {
  if (s.count < 1) throw CliFailure{kExitConfig, "--count must be >= 1"};
  if (!s.motion_range.empty() && (s.motion_range[0] < 0 || s.motion_range[1] < s.motion_range[0])) {
    throw CliFailure{kExitConfig, "--motion-range needs 0 <= LO <= HI"};
  }
  json profile;
  if (!s.profile.empty()) {
    profile = read_json_file(s.profile);
  } else if (s.a || s.b) {
    profile = {{"name", "constant"},
               {"signal_range", {0.0, 1.0}},
               {"table", {{{"iso", s.iso}, {"a", s.a.value_or(0.0)}, {"b", s.b.value_or(0.0)}}}}};
  } else {
    profile = nullptr;
  }
  // Per-sequence motion draws use the raw engine output so the values do not
  // depend on the standard library's distribution implementations.
  std::mt19937_64 gen(s.seed ^ 0x6d6f74696f6eULL);
  auto unit = [&gen] { return static_cast<double>(gen() >> 11) * 0x1p-53; };
  json sequences = json::array();
  for (int i = 0; i < s.count; ++i) {
    double motion = s.motion, direction = s.direction;
    if (!s.motion_range.empty()) motion = s.motion_range[0] + (s.motion_range[1] - s.motion_range[0]) * unit();
    if (s.random_direction) direction = 360.0 * unit();
    json scene{{"kind", s.kind},
               {"height", s.height.value_or(s.size)},
               {"width", s.width.value_or(s.size)},
               {"frames", s.frames},
               {"channels", s.channels},
               {"motion_px_per_frame", motion},
               {"direction_deg", direction},
               {"texture_sigma", s.texture_sigma},
               {"texture_seed", s.seed + static_cast<std::uint64_t>(i)}};
    sequences.push_back({{"scene", scene}, {"iso", s.iso}, {"seed", s.seed + 1000003ULL * (i + 1)}});
  }
  json manifest{{"sequences", sequences}};
  if (!profile.is_null()) manifest["profile"] = profile;
  const fs::path out = output_path(s.out);
  check(gruvd_synth(manifest.dump().c_str(), out.string().c_str()));
  std::cout << "wrote " << s.count << " sequence(s) and " << (out / "manifest.json").string()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct NoiseArgs {
  std::string input, out, frames_dir;
  NoiseFlags noise;
  std::uint64_t seed = 0;
  bool clip = false;
};

void write_frames(const gruvd_sequence* seq, const fs::path& dir, const std::string& prefix,
                  int bits) {
  size_t dims[4];
  check(gruvd_sequence_shape(seq, dims));
  const char* ext = dims[1] == 3 ? "ppm" : "pgm";
  for (size_t t = 0; t < dims[0]; ++t) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%04zu.%s", prefix.c_str(), t, ext);
    check(gruvd_sequence_write_frame(seq, t, (dir / name).string().c_str(), bits));
  }
}

int cmd_noise(const NoiseArgs& n) {
  const auto [a, b] = n.noise.resolve();
  gruvd_sequence* raw = nullptr;
  check(gruvd_sequence_read(n.input.c_str(), &raw));
  auto clean = seq_ptr(raw);
  check(gruvd_noise(clean.get(), a, b, n.seed, n.clip ? 1 : 0, &raw));
  auto noisy = seq_ptr(raw);
  const fs::path out = output_path(n.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  check(gruvd_sequence_write(noisy.get(), out.string().c_str()));
  if (!n.frames_dir.empty()) {
    const fs::path dir = output_path(n.frames_dir);
    ensure_dir(dir);
    write_frames(noisy.get(), dir, "noisy", 16);
  }
  std::cout << "wrote " << out.string() << " (a=" << a << ", b=" << b << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset, out, config;
  bool resume = false;
  std::uint64_t model_seed = 0;
  int log_every = 10;
  // Flag overrides; unset flags leave the config file / defaults alone.
  std::optional<std::int64_t> epochs, lr_decay_every, checkpoint_every;
  std::optional<double> lr, lr_decay_factor, w1, w2, grad_clip;
  std::optional<int> batch, patch, seq_len, bptt;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> kind, block_kind;
  std::optional<int> hidden, blocks;
  std::optional<bool> update_extra;
};

struct TrainProgress {
  int log_every;
};

int on_epoch(const gruvd_epoch_info* info, void* user) {
  const auto* p = static_cast<const TrainProgress*>(user);
  if (p->log_every > 0 && (info->epoch % p->log_every == 0)) {
    std::printf("epoch %lld loss %.6f fusion %.6f init %.6f lr %.3g (%.2fs)\n",
                static_cast<long long>(info->epoch), info->loss, info->loss_fusion,
                info->loss_init, info->lr, info->seconds);
    std::fflush(stdout);
  }
  return 0;
}

int cmd_train(const TrainArgs& t) {
  json model = json::object(), train = json::object();
  if (!t.config.empty()) {
    const json cfg = read_json_file(t.config);
    for (const auto& [key, value] : cfg.items()) {
      if (key == "model") model = value;
      else if (key == "train") train = value;
      else throw CliFailure{kExitConfig, t.config + ": unknown section '" + key + "'"};
    }
  }
  if (t.epochs) train["max_epochs"] = *t.epochs;
  if (t.lr) train["lr0"] = *t.lr;
  if (t.lr_decay_every) train["lr_decay_every"] = *t.lr_decay_every;
  if (t.lr_decay_factor) train["lr_decay_factor"] = *t.lr_decay_factor;
  if (t.w1) train["w1"] = *t.w1;
  if (t.w2) train["w2"] = *t.w2;
  if (t.grad_clip) train["grad_clip"] = *t.grad_clip;
  if (t.batch) train["batch"] = *t.batch;
  if (t.patch) train["patch"] = *t.patch;
  if (t.seq_len) train["seq_len"] = *t.seq_len;
  if (t.bptt) train["bptt_truncate"] = *t.bptt;
  if (t.seed) train["seed"] = *t.seed;
  if (t.checkpoint_every) train["checkpoint_every"] = *t.checkpoint_every;
  if (t.kind) model["kind"] = *t.kind;
  if (t.block_kind) model["block_kind"] = *t.block_kind;
  if (t.hidden) model["hidden_channels"] = *t.hidden;
  if (t.blocks) model["num_blocks"] = *t.blocks;
  if (t.update_extra) model["update_gate_extra_inputs"] = *t.update_extra;

  const fs::path out = output_path(t.out);
  TrainProgress progress{t.log_every};
  const std::string model_text = model.empty() ? "" : model.dump();
  const std::string train_text = train.dump();
  check(gruvd_train(t.dataset.c_str(), model_text.empty() ? nullptr : model_text.c_str(),
                    train_text.c_str(), t.model_seed, out.string().c_str(), t.resume ? 1 : 0,
                    &on_epoch, &progress));
  std::cout << "checkpoint written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct DenoiseArgs {
  std::string checkpoint, input, out;
  NoiseFlags noise;
  bool dump_gates = false;
  bool spatial_only = false;
  int bits = 16;
};

int cmd_denoise(const DenoiseArgs& d) {
  if (d.bits != 8 && d.bits != 16) throw CliFailure{kExitConfig, "--bits must be 8 or 16"};
  const auto [a, b] = d.noise.resolve();
  gruvd_model* rm = nullptr;
  check(gruvd_model_load(d.checkpoint.c_str(), &rm));
  auto model = model_ptr(rm);
  gruvd_sequence* raw = nullptr;
  check(gruvd_sequence_read(d.input.c_str(), &raw));
  auto noisy = seq_ptr(raw);

  gruvd_sequence *y = nullptr, *s = nullptr, *r = nullptr, *f = nullptr;
  check(gruvd_denoise(model.get(), noisy.get(), a, b, d.spatial_only ? 1 : 0, &y,
                      d.dump_gates ? &s : nullptr, d.dump_gates ? &r : nullptr,
                      d.dump_gates ? &f : nullptr));
  auto ys = seq_ptr(y), ss = seq_ptr(s), rs = seq_ptr(r), fs_ = seq_ptr(f);

  const fs::path out = output_path(d.out);
  ensure_dir(out);
  check(gruvd_sequence_write(ys.get(), (out / "denoised.gvsq").string().c_str()));
  write_frames(ys.get(), out, "y", d.bits);
  if (d.dump_gates) {
    write_frames(ss.get(), out, "s", 8);
    write_frames(rs.get(), out, "r", 8);
    write_frames(fs_.get(), out, "f", 8);
  }
  size_t dims[4];
  check(gruvd_sequence_shape(ys.get(), dims));
  std::cout << "denoised " << dims[0] << " frame(s) into " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, baseline, dataset, variants = "s_only,fused,spatial_only";
  std::string csv, frames_csv;
  double peak = 1.0;
};

int cmd_eval(const EvalArgs& e) {
  gruvd_model* rm = nullptr;
  check(gruvd_model_load(e.checkpoint.c_str(), &rm));
  auto model = model_ptr(rm);
  auto baseline = model_ptr();
  if (!e.baseline.empty()) {
    check(gruvd_model_load(e.baseline.c_str(), &rm));
    baseline.reset(rm);
  }
  Owned csv, table, frames;
  check(gruvd_evaluate(model.get(), baseline.get(), e.dataset.c_str(), e.variants.c_str(), e.peak,
                       &csv.p, &table.p, e.frames_csv.empty() ? nullptr : &frames.p));
  std::cout << table.str();
  if (!e.csv.empty()) write_text(output_path(e.csv), csv.str());
  if (!e.frames_csv.empty()) write_text(output_path(e.frames_csv), frames.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string config;
  bool inject_fault = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> kind;
};

int cmd_gradcheck(const GradcheckArgs& g) {
  json cfg = g.config.empty() ? json::object() : read_json_file(g.config);
  if (g.inject_fault) cfg["inject_fault"] = true;
  if (g.seed) cfg["seed"] = *g.seed;
  if (g.kind) cfg["kind"] = *g.kind;
  Owned report;
  double err = 0.0;
  const gruvd_status s = gruvd_gradcheck(cfg.dump().c_str(), &err, &report.p);
  std::cout << report.str();
  check(s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gruvd: recurrent video denoising"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0: all cores)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic dataset and manifest");
  c_synth->add_option("--kind", synth.kind, "drifting_texture, moving_shapes or static");
  c_synth->add_option("--frames", synth.frames, "Frames per sequence");
  c_synth->add_option("--size", synth.size, "Frame height and width");
  c_synth->add_option("--height", synth.height);
  c_synth->add_option("--width", synth.width);
  c_synth->add_option("--channels", synth.channels, "1 or 3");
  c_synth->add_option("--motion", synth.motion, "Drift in pixels per frame");
  c_synth->add_option("--direction", synth.direction, "Drift direction in degrees");
  c_synth->add_option("--motion-range", synth.motion_range, "Draw each sequence's drift uniformly from LO HI")
      ->expected(2);
  c_synth->add_flag("--random-direction", synth.random_direction, "Draw each sequence's direction uniformly");
  c_synth->add_option("--texture-sigma", synth.texture_sigma, "Texture smoothness");
  c_synth->add_option("--seed", synth.seed, "Base seed");
  c_synth->add_option("--count", synth.count, "Number of sequences");
  c_synth->add_option("--iso", synth.iso, "ISO recorded for each sequence");
  c_synth->add_option("--a", synth.a, "Constant-profile a");
  c_synth->add_option("--b", synth.b, "Constant-profile b");
  c_synth->add_option("--profile", synth.profile, "Sensor profile JSON");
  c_synth->add_option("--out", synth.out, "Output directory")->required();

  NoiseArgs noise;
  auto* c_noise = app.add_subcommand("noise", "Add sensor noise to a clean sequence");
  c_noise->add_option("--input", noise.input, "Clean GVSQ sequence")->required();
  c_noise->add_option("--out", noise.out, "Noisy GVSQ output")->required();
  c_noise->add_option("--frames-dir", noise.frames_dir, "Also write 16-bit frames here");
  c_noise->add_option("--seed", noise.seed);
  c_noise->add_flag("--clip", noise.clip, "Clamp to the signal range");
  noise.noise.add(c_noise);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model on a dataset manifest");
  c_train->add_option("--dataset", train.dataset, "Dataset manifest.json")->required();
  c_train->add_option("--out", train.out, "Checkpoint directory")->required();
  c_train->add_option("--config", train.config, "JSON with optional 'model' and 'train' sections");
  c_train->add_flag("--resume", train.resume, "Continue from the checkpoint in --out");
  c_train->add_option("--model-seed", train.model_seed, "Weight initialisation seed");
  c_train->add_option("--log-every", train.log_every, "Print every N epochs (0: silent)");
  c_train->add_option("--epochs", train.epochs);
  c_train->add_option("--lr", train.lr);
  c_train->add_option("--lr-decay-every", train.lr_decay_every);
  c_train->add_option("--lr-decay-factor", train.lr_decay_factor);
  c_train->add_option("--w1", train.w1, "Fused-output loss weight");
  c_train->add_option("--w2", train.w2, "Candidate loss weight");
  c_train->add_option("--grad-clip", train.grad_clip);
  c_train->add_option("--batch", train.batch);
  c_train->add_option("--patch", train.patch);
  c_train->add_option("--seq-len", train.seq_len);
  c_train->add_option("--bptt", train.bptt, "Truncate BPTT every N frames (0: full)");
  c_train->add_option("--seed", train.seed, "Data sampling seed");
  c_train->add_option("--checkpoint-every", train.checkpoint_every);
  c_train->add_option("--model", train.kind, "gru_vd or gru");
  c_train->add_option("--block-kind", train.block_kind, "plain or distill");
  c_train->add_option("--hidden", train.hidden);
  c_train->add_option("--blocks", train.blocks);
  c_train->add_option("--update-extra-inputs", train.update_extra);

  DenoiseArgs denoise;
  auto* c_denoise = app.add_subcommand("denoise", "Denoise a GVSQ sequence");
  c_denoise->add_option("--checkpoint", denoise.checkpoint)->required();
  c_denoise->add_option("--input", denoise.input, "Noisy GVSQ sequence")->required();
  c_denoise->add_option("--out", denoise.out, "Output directory")->required();
  c_denoise->add_flag("--dump-gates", denoise.dump_gates, "Also write s, r and f maps");
  c_denoise->add_flag("--spatial-only", denoise.spatial_only);
  c_denoise->add_option("--bits", denoise.bits, "Bits per sample of y frames (8 or 16)");
  denoise.noise.add(c_denoise);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Compare variants on a dataset");
  c_eval->add_option("--checkpoint", eval.checkpoint)->required();
  c_eval->add_option("--baseline", eval.baseline, "GRU baseline checkpoint");
  c_eval->add_option("--dataset", eval.dataset, "Dataset manifest.json")->required();
  c_eval->add_option("--variants", eval.variants,
                     "Comma list of s_only,fused,gru_baseline,spatial_only");
  c_eval->add_option("--csv", eval.csv, "Write the summary CSV");
  c_eval->add_option("--frames-csv", eval.frames_csv, "Write per-frame metrics");
  c_eval->add_option("--peak", eval.peak, "Signal peak (1 for normalised data)");

  GradcheckArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  c_grad->add_option("--config", grad.config, "Gradcheck JSON config");
  c_grad->add_flag("--inject-fault", grad.inject_fault, "Corrupt one backward rule");
  c_grad->add_option("--seed", grad.seed);
  c_grad->add_option("--model", grad.kind, "gru_vd or gru");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  gruvd_set_threads(threads);
  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_noise) return cmd_noise(noise);
    if (*c_train) return cmd_train(train);
    if (*c_denoise) return cmd_denoise(denoise);
    if (*c_eval) return cmd_eval(eval);
    if (*c_grad) return cmd_gradcheck(grad);
  } catch (const CliFailure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  }
  return kExitConfig;
}
