// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// PSNR/SSIM, sequence denoising and the variant comparison runner.
// Metrics are computed in double whatever the model precision.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gruvd/cell.hpp"
#include "gruvd/data_io.hpp"
#include "gruvd/noise.hpp"
#include "gruvd/tensor.hpp"

namespace gruvd {

/// Reported PSNR when the two inputs are identical.
inline constexpr double kPsnrCap = 100.0;

/// 10*log10(peak^2 / MSE), capped at kPsnrCap.
double psnr(const TensorD& a, const TensorD& b, double peak = 1.0);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, mean over valid window positions. The last two dimensions are
/// spatial; every leading index is a channel, and channel scores are averaged.
double ssim(const TensorD& a, const TensorD& b, double peak = 1.0);

double mse(const TensorD& a, const TensorD& b);

/// Per-frame MSE of outputs against one static clean frame.
std::vector<double> temporal_stability(std::span<const TensorD> outputs, const TensorD& clean);

/// Model outputs for one [T,C,H,W] sequence, each [T,C,H,W].
struct DenoisedSequence {
  TensorD y, s, r, f;
};

/// Runs the model over a noisy sequence with noise map noise_map(params, x).
/// With spatial_only every frame starts from y_prev = x_n.
template <typename T>
DenoisedSequence denoise_sequence(const RecurrentModel<T>& model, const TensorD& noisy,
                                  const NoiseParams& params, bool spatial_only = false);

enum class Variant { kNoisy, kSOnly, kFused, kGruBaseline, kSpatialOnly };

std::string to_string(Variant v);
Variant parse_variant(std::string_view s);
/// Comma-separated list; "noisy" is always included and listed first.
std::vector<Variant> parse_variants(std::string_view list);

struct EvalSequence {
  std::string name;
  TensorD clean;  // [T,C,H,W]
  TensorD noisy;  // [T,C,H,W]
  NoiseParams params;
};

/// Clean sequences of the manifest with noise drawn at each entry's ISO and seed.
std::vector<EvalSequence> load_eval_set(const std::filesystem::path& manifest_path);
std::vector<EvalSequence> make_eval_set(const Manifest& manifest,
                                        std::span<const TensorD> clean_sequences);

struct FrameMetric {
  Variant variant;
  std::size_t sequence = 0;
  std::size_t frame = 0;
  double psnr = 0;
  double ssim = 0;
};

struct VariantSummary {
  Variant variant;
  double psnr_mean = 0;
  double ssim_mean = 0;
  std::size_t frames = 0;
};

struct EvalReport {
  std::vector<VariantSummary> rows;
  std::vector<FrameMetric> frames;

  const VariantSummary* find(Variant v) const;
  /// variant,psnr_mean,ssim_mean,frames
  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
  /// variant,sequence,frame,psnr,ssim
  void write_frames_csv(std::ostream& out) const;
  void write_table(std::ostream& out) const;
};

struct EvalOptions {
  std::vector<Variant> variants{Variant::kNoisy, Variant::kSOnly, Variant::kFused,
                                Variant::kSpatialOnly};
  double peak = 1.0;
};

/// Sequences run in parallel; results are merged in sequence order. The
/// baseline is required only for the gru_baseline variant.
template <typename T>
EvalReport evaluate(const RecurrentModel<T>& model, const RecurrentModel<T>* baseline,
                    std::span<const EvalSequence> data, const EvalOptions& options = {});

}  // namespace gruvd
