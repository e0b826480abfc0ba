// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic video, frame and sequence files, dataset manifests and the batch
// providers that feed training.
//
// File formats:
//   PGM/PPM  binary Netpbm (P5 one channel, P6 three channels), maxval 255 or
//            65535; 16-bit samples are big-endian per Netpbm.
//   GVSQ     "GVSQ", u32 T, u32 C, u32 H, u32 W (little-endian), then
//            T*C*H*W little-endian u16 samples in T,C,H,W order.
// Values map to samples as round-half-up(clamp(v,0,1) * maxval).

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gruvd/noise.hpp"
#include "gruvd/tensor.hpp"

namespace gruvd {

enum class SceneKind { kDriftingTexture, kMovingShapes, kStatic };

std::string to_string(SceneKind kind);
SceneKind parse_scene_kind(std::string_view s);

struct SyntheticSceneSpec {
  SceneKind kind = SceneKind::kDriftingTexture;
  int height = 64;
  int width = 64;
  int frames = 8;
  int channels = 1;
  double motion_px_per_frame = 1.0;
  /// Drift direction, degrees counter-clockwise from +x.
  double direction_deg = 0.0;
  /// Gaussian blur sigma of the texture in pixels; larger is smoother.
  double texture_sigma = 1.5;
  std::uint64_t texture_seed = 0;

  void validate() const;
  bool operator==(const SyntheticSceneSpec&) const = default;
};

void to_json(nlohmann::json& j, const SyntheticSceneSpec& s);
void from_json(const nlohmann::json& j, SyntheticSceneSpec& s);

/// Clean sequence [T,C,H,W] with values in [0,1]. Deterministic in the spec.
TensorD generate_scene(const SyntheticSceneSpec& spec);

struct SequenceBatch {
  TensorD clean;  // [B,T,C,H,W]
  TensorD noisy;  // [B,T,C,H,W]
  TensorD delta;  // [B,T,1,H,W]
  std::vector<NoiseParams> params;  // one per batch element

  std::size_t batch() const { return clean.dim(0); }
  std::size_t frames() const { return clean.dim(1); }
};

/// Frame t of a [B,T,C,H,W] tensor as [B,C,H,W].
TensorD frame_at(const TensorD& sequences, std::size_t t);
/// Frame t of a [T,C,H,W] tensor as [1,C,H,W].
TensorD sequence_frame(const TensorD& sequence, std::size_t t);
/// Stacks [1,C,H,W] (or [C,H,W]) frames into [T,C,H,W].
TensorD stack_frames(std::span<const TensorD> frames);

/// Noise-std map of [N,C,H,W] observed frames: std_map of the channel-mean
/// intensity, [N,1,H,W].
TensorD noise_map(const NoiseParams& params, const TensorD& noisy);

struct BatchRequest {
  std::vector<int> iso_choices;  // empty: every ISO in the profile
  int crop = 32;
  int seq_len = 8;
  int batch = 4;
  std::uint64_t seed = 0;
};

/// Random scene, temporal window, spatial crop and ISO per element; noise
/// added per element with a derived seed; delta = std_map(params, noisy).
SequenceBatch make_batch(std::span<const TensorD> scenes, const SensorProfile& profile,
                         const BatchRequest& request);

class SequenceProvider {
 public:
  virtual ~SequenceProvider() = default;
  /// Batch for a given epoch; nullopt when the provider is exhausted.
  virtual std::optional<SequenceBatch> batch_for_epoch(std::int64_t epoch) = 0;
};

/// Infinite provider: epoch e draws make_batch with seed hash(seed, e), so
/// any epoch can be regenerated independently (resume is exact).
class SyntheticProvider final : public SequenceProvider {
 public:
  SyntheticProvider(std::vector<TensorD> scenes, SensorProfile profile, BatchRequest request);
  std::optional<SequenceBatch> batch_for_epoch(std::int64_t epoch) override;

 private:
  std::vector<TensorD> scenes_;
  SensorProfile profile_;
  BatchRequest request_;
};

/// Serves a fixed list of batches, then reports exhaustion.
class FixedProvider final : public SequenceProvider {
 public:
  explicit FixedProvider(std::vector<SequenceBatch> batches) : batches_(std::move(batches)) {}
  std::optional<SequenceBatch> batch_for_epoch(std::int64_t epoch) override;

 private:
  std::vector<SequenceBatch> batches_;
};

// ---------------------------------------------------------------------------
// Files

/// Writes a [C,H,W] or [1,C,H,W] frame with C in {1,3}. bits is 8 or 16.
void write_frame(const std::filesystem::path& path, const TensorD& frame, int bits = 16);
/// Reads a PGM/PPM into [C,H,W].
TensorD read_frame(const std::filesystem::path& path);

void write_sequence(const std::filesystem::path& path, const TensorD& sequence);
/// [T,C,H,W].
TensorD read_sequence(const std::filesystem::path& path);

/// round-half-up(clamp(v,0,1) * maxval).
std::uint32_t quantize(double v, std::uint32_t maxval);

// ---------------------------------------------------------------------------
// Manifests

struct ManifestEntry {
  SyntheticSceneSpec scene;
  int iso = 1600;
  std::uint64_t seed = 0;  // noise seed for evaluation
  std::string file;        // GVSQ path relative to the manifest
};

struct Manifest {
  SensorProfile profile;
  std::vector<ManifestEntry> sequences;
};

void to_json(nlohmann::json& j, const Manifest& m);
void from_json(const nlohmann::json& j, Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

/// Generates every entry's scene into out_dir (file names filled in when
/// empty) and writes out_dir/manifest.json. Returns the manifest written.
Manifest synthesize_dataset(const std::filesystem::path& out_dir, Manifest manifest);

/// Clean sequences of a manifest, in entry order.
std::vector<TensorD> load_clean_sequences(const std::filesystem::path& manifest_path,
                                          const Manifest& manifest);

}  // namespace gruvd
