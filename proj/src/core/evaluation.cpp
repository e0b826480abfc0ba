// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include "gruvd/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gruvd/errors.hpp"

namespace gruvd {

namespace {

void require_same(const char* op, const TensorD& a, const TensorD& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes differ, " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable valid-mode filter of an HxW plane.
std::vector<double> filter_valid(const std::vector<double>& in, std::size_t H, std::size_t W,
                                 const std::array<double, kWindow>& w) {
  const std::size_t Wo = W - kWindow + 1, Ho = H - kWindow + 1;
  std::vector<double> rows(H * Wo);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < Wo; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += w[k] * in[y * W + x + k];
      rows[y * Wo + x] = acc;
    }
  }
  std::vector<double> out(Ho * Wo);
  for (std::size_t y = 0; y < Ho; ++y) {
    for (std::size_t x = 0; x < Wo; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += w[k] * rows[(y + k) * Wo + x];
      out[y * Wo + x] = acc;
    }
  }
  return out;
}

}  // namespace

double mse(const TensorD& a, const TensorD& b) {
  require_same("mse", a, b);
  const auto av = a.data(), bv = b.data();
  if (av.empty()) throw ShapeError("mse of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  return acc / static_cast<double>(av.size());
}

double psnr(const TensorD& a, const TensorD& b, double peak) {
  if (!(peak > 0.0)) throw ConfigError("psnr peak must be positive");
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

double ssim(const TensorD& a, const TensorD& b, double peak) {
  require_same("ssim", a, b);
  if (!(peak > 0.0)) throw ConfigError("ssim peak must be positive");
  if (a.rank() < 2) throw ShapeError("ssim needs at least two spatial dimensions");
  const std::size_t H = a.dim(a.rank() - 2), W = a.dim(a.rank() - 1);
  if (H < static_cast<std::size_t>(kWindow) || W < static_cast<std::size_t>(kWindow)) {
    throw ShapeError("ssim: frame " + std::to_string(H) + "x" + std::to_string(W) +
                     " is smaller than the 11x11 window");
  }
  const std::size_t planes = a.numel() / (H * W);
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const auto w = gaussian_window();
  const auto av = a.data(), bv = b.data();

  double total = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    std::vector<double> x(av.begin() + p * H * W, av.begin() + (p + 1) * H * W);
    std::vector<double> y(bv.begin() + p * H * W, bv.begin() + (p + 1) * H * W);
    std::vector<double> xx(H * W), yy(H * W), xy(H * W);
    for (std::size_t i = 0; i < H * W; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, H, W, w);
    const auto my = filter_valid(y, H, W, w);
    const auto sxx = filter_valid(xx, H, W, w);
    const auto syy = filter_valid(yy, H, W, w);
    const auto sxy = filter_valid(xy, H, W, w);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cxy = sxy[i] - mx[i] * my[i];
      acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return std::clamp(total / static_cast<double>(planes), -1.0, 1.0);
}

std::vector<double> temporal_stability(std::span<const TensorD> outputs, const TensorD& clean) {
  std::vector<double> series;
  series.reserve(outputs.size());
  for (const auto& o : outputs) {
    if (o.numel() != clean.numel()) {
      throw ShapeError("temporal_stability: output " + shape_string(o.shape()) + " vs clean " +
                       shape_string(clean.shape()));
    }
    const auto ov = o.data(), cv = clean.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < ov.size(); ++i) acc += (ov[i] - cv[i]) * (ov[i] - cv[i]);
    series.push_back(acc / static_cast<double>(ov.size()));
  }
  return series;
}

// ---------------------------------------------------------------------------

template <typename T>
DenoisedSequence denoise_sequence(const RecurrentModel<T>& model, const TensorD& noisy,
                                  const NoiseParams& params, bool spatial_only) {
  if (noisy.rank() != 4) {
    throw ShapeError("denoise expects a [T,C,H,W] sequence, got " + shape_string(noisy.shape()));
  }
  if (noisy.dim(1) != static_cast<std::size_t>(model.config().channels)) {
    throw ConfigError("model expects " + std::to_string(model.config().channels) +
                      " channels, sequence has " + std::to_string(noisy.dim(1)));
  }
  NoGradGuard no_grad;
  const TensorD delta = noise_map(params, noisy);
  DenoisedSequence out;
  if (spatial_only) {
    // Every frame is its own one-frame sequence, so the whole clip is one batch.
    const Tensor<T> x = noisy.cast<T>();
    const auto step = model.step(x, delta.cast<T>(), init_state(x));
    out.y = step.y.template cast<double>();
    out.s = step.s.template cast<double>();
    out.r = step.r.template cast<double>();
    out.f = step.f.template cast<double>();
    return out;
  }
  std::vector<FrameInput<T>> frames;
  for (std::size_t t = 0; t < noisy.dim(0); ++t) {
    frames.push_back({sequence_frame(noisy, t).cast<T>(), sequence_frame(delta, t).cast<T>()});
  }
  const auto steps = run_sequence<T>(model, frames);
  std::vector<TensorD> y, s, r, f;
  for (const auto& st : steps) {
    y.push_back(st.y.template cast<double>());
    s.push_back(st.s.template cast<double>());
    r.push_back(st.r.template cast<double>());
    f.push_back(st.f.template cast<double>());
  }
  out.y = stack_frames(y);
  out.s = stack_frames(s);
  out.r = stack_frames(r);
  out.f = stack_frames(f);
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kNoisy:
      return "noisy";
    case Variant::kSOnly:
      return "s_only";
    case Variant::kFused:
      return "fused";
    case Variant::kGruBaseline:
      return "gru_baseline";
    case Variant::kSpatialOnly:
      return "spatial_only";
  }
  return "unknown";
}

Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::kNoisy, Variant::kSOnly, Variant::kFused, Variant::kGruBaseline,
                    Variant::kSpatialOnly}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + std::string(s) +
                    "' (expected noisy, s_only, fused, gru_baseline, spatial_only)");
}

std::vector<Variant> parse_variants(std::string_view list) {
  std::vector<Variant> out{Variant::kNoisy};
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = std::min(list.find(',', pos), list.size());
    const auto item = list.substr(pos, comma - pos);
    if (!item.empty()) {
      const Variant v = parse_variant(item);
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    pos = comma + 1;
  }
  return out;
}

std::vector<EvalSequence> make_eval_set(const Manifest& manifest,
                                        std::span<const TensorD> clean_sequences) {
  if (clean_sequences.size() != manifest.sequences.size()) {
    throw ConfigError("manifest lists " + std::to_string(manifest.sequences.size()) +
                      " sequences, got " + std::to_string(clean_sequences.size()));
  }
  std::vector<EvalSequence> out;
  for (std::size_t i = 0; i < clean_sequences.size(); ++i) {
    const auto& entry = manifest.sequences[i];
    EvalSequence e;
    e.name = entry.file.empty() ? "seq_" + std::to_string(i) : entry.file;
    e.clean = clean_sequences[i];
    e.params = lookup_iso(manifest.profile, entry.iso);
    e.noisy = add_noise(e.params, e.clean, entry.seed,
                        {manifest.profile.signal_min, manifest.profile.signal_max, false});
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EvalSequence> load_eval_set(const std::filesystem::path& manifest_path) {
  const Manifest m = read_manifest(manifest_path);
  const auto clean = load_clean_sequences(manifest_path, m);
  return make_eval_set(m, clean);
}

const VariantSummary* EvalReport::find(Variant v) const {
  for (const auto& r : rows) {
    if (r.variant == v) return &r;
  }
  return nullptr;
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "variant,psnr_mean,ssim_mean,frames\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%zu\n", to_string(r.variant).c_str(),
                  r.psnr_mean, r.ssim_mean, r.frames);
    out << line;
  }
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(out);
  if (!out) throw IoError("write failed for " + path.string());
}

void EvalReport::write_frames_csv(std::ostream& out) const {
  out << "variant,sequence,frame,psnr,ssim\n";
  char line[160];
  for (const auto& f : frames) {
    std::snprintf(line, sizeof(line), "%s,%zu,%zu,%.6f,%.6f\n", to_string(f.variant).c_str(),
                  f.sequence, f.frame, f.psnr, f.ssim);
    out << line;
  }
}

void EvalReport::write_table(std::ostream& out) const {
  char line[160];
  std::snprintf(line, sizeof(line), "%-14s %10s %8s %7s\n", "variant", "PSNR(dB)", "SSIM",
                "frames");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-14s %10.3f %8.4f %7zu\n", to_string(r.variant).c_str(),
                  r.psnr_mean, r.ssim_mean, r.frames);
    out << line;
  }
}

template <typename T>
EvalReport evaluate(const RecurrentModel<T>& model, const RecurrentModel<T>* baseline,
                    std::span<const EvalSequence> data, const EvalOptions& options) {
  std::vector<Variant> variants{Variant::kNoisy};
  for (Variant v : options.variants) {
    if (std::find(variants.begin(), variants.end(), v) == variants.end()) variants.push_back(v);
  }
  const bool need_baseline =
      std::find(variants.begin(), variants.end(), Variant::kGruBaseline) != variants.end();
  if (need_baseline && baseline == nullptr) {
    throw ConfigError("variant gru_baseline needs a baseline checkpoint");
  }
  for (const auto& seq : data) {
    require_same("evaluate", seq.clean, seq.noisy);
    for (const RecurrentModel<T>* m : {&model, need_baseline ? baseline : nullptr}) {
      if (m != nullptr && seq.clean.dim(1) != static_cast<std::size_t>(m->config().channels)) {
        throw ConfigError("checkpoint has " + std::to_string(m->config().channels) +
                          " channels, sequence " + seq.name + " has " +
                          std::to_string(seq.clean.dim(1)));
      }
    }
  }

  // per_seq[i][v] holds the frame metrics of sequence i under variants[v].
  std::vector<std::vector<std::vector<FrameMetric>>> per_seq(data.size());
  std::vector<std::exception_ptr> errors(data.size());
  const long n = static_cast<long>(data.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      const auto& seq = data[static_cast<std::size_t>(i)];
      std::optional<DenoisedSequence> main_run, spatial_run, base_run;
      auto& rows = per_seq[static_cast<std::size_t>(i)];
      for (Variant v : variants) {
        const TensorD* out = nullptr;
        switch (v) {
          case Variant::kNoisy:
            out = &seq.noisy;
            break;
          case Variant::kSOnly:
          case Variant::kFused:
            if (!main_run) main_run = denoise_sequence(model, seq.noisy, seq.params);
            out = v == Variant::kFused ? &main_run->y : &main_run->s;
            break;
          case Variant::kSpatialOnly:
            if (!spatial_run) spatial_run = denoise_sequence(model, seq.noisy, seq.params, true);
            out = &spatial_run->y;
            break;
          case Variant::kGruBaseline:
            if (!base_run) base_run = denoise_sequence(*baseline, seq.noisy, seq.params);
            out = &base_run->y;
            break;
        }
        std::vector<FrameMetric> metrics;
        for (std::size_t t = 0; t < seq.clean.dim(0); ++t) {
          const TensorD a = sequence_frame(*out, t);
          const TensorD b = sequence_frame(seq.clean, t);
          metrics.push_back({v, static_cast<std::size_t>(i), t, psnr(a, b, options.peak),
                             ssim(a, b, options.peak)});
        }
        rows.push_back(std::move(metrics));
      }
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvalReport report;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    VariantSummary row{variants[v]};
    for (const auto& seq_rows : per_seq) {
      for (const auto& m : seq_rows[v]) {
        row.psnr_mean += m.psnr;
        row.ssim_mean += m.ssim;
        ++row.frames;
        report.frames.push_back(m);
      }
    }
    if (row.frames > 0) {
      row.psnr_mean /= static_cast<double>(row.frames);
      row.ssim_mean /= static_cast<double>(row.frames);
    }
    report.rows.push_back(row);
  }
  return report;
}

template DenoisedSequence denoise_sequence<float>(const RecurrentModel<float>&, const TensorD&,
                                                  const NoiseParams&, bool);
template DenoisedSequence denoise_sequence<double>(const RecurrentModel<double>&, const TensorD&,
                                                   const NoiseParams&, bool);
template EvalReport evaluate<float>(const RecurrentModel<float>&, const RecurrentModel<float>*,
                                    std::span<const EvalSequence>, const EvalOptions&);
template EvalReport evaluate<double>(const RecurrentModel<double>&, const RecurrentModel<double>*,
                                     std::span<const EvalSequence>, const EvalOptions&);

}  // namespace gruvd
