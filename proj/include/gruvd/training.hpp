// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Weighted two-term L1 loss, Adam, backpropagation through time over frame
// sequences, the step-decay learning-rate schedule and checkpoints.
//
// One "epoch" is one optimizer step on one batch of sequences.
//
// Checkpoint directory layout:
//   model.json         kind, ModelConfig, per-gate ConvBlockSpec, parameter names
//   parameters.gvtd    parameter tensors in model.json order
//   optimizer.gvtd     Adam first moments, then second moments (training only)
//   train_config.json  TrainConfig (training only)
//   state.json         {"epoch": next epoch, "adam_t": step count} (training only)

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "gruvd/cell.hpp"
#include "gruvd/data_io.hpp"
#include "gruvd/tensor.hpp"

namespace gruvd {

struct TrainConfig {
  int seq_len = 8;
  int patch = 32;
  int batch = 4;
  double lr0 = 1e-3;
  std::int64_t lr_decay_every = 1500;
  double lr_decay_factor = 10.0;
  double w1 = 0.1;  // fused output term
  double w2 = 1.0;  // candidate term
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::int64_t max_epochs = 2000;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 10.0;
  /// 0 = full BPTT through the sequence; k > 0 detaches the carry every k frames.
  int bptt_truncate = 0;
  /// Write a checkpoint every k epochs (0: only at the end).
  std::int64_t checkpoint_every = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Rejects unknown keys; missing keys keep their current value.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// lr0 / decay_factor^floor(epoch / decay_every).
double learning_rate(const TrainConfig& cfg, std::int64_t epoch);

/// w1 * mean|y - y_true| + w2 * mean|s - y_true|.
template <typename T>
Tensor<T> weighted_l1_loss(const Tensor<T>& y, const Tensor<T>& s, const Tensor<T>& y_true,
                           T w1, T w2);

template <typename T>
struct SequenceLoss {
  Tensor<T> total;  // tracked scalar
  double fusion = 0;  // mean |y - y_true| over frames
  double initial = 0;  // mean |s - y_true| over frames
};

/// Loss averaged over every frame of the sequence.
template <typename T>
SequenceLoss<T> sequence_loss(std::span<const CellOutput<T>> outputs,
                              std::span<const Tensor<T>> targets, T w1, T w2);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update, t >= 1. The gradient is multiplied by
/// grad_scale first (used for norm clipping).
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
               std::int64_t t, double lr, const AdamHyper& hyper, double grad_scale = 1.0);

template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(const RecurrentModel<T>& model);

  /// Updates every parameter that has a gradient. Returns the gradient norm
  /// before clipping.
  double step(RecurrentModel<T>& model, double lr, const AdamHyper& hyper, double clip);

  std::int64_t t() const { return t_; }
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path, std::int64_t t);

 private:
  std::vector<std::vector<T>> m_, v_;
  std::vector<Shape> shapes_;
  std::int64_t t_ = 0;
};

struct EpochRecord {
  std::int64_t epoch = 0;
  double loss = 0;
  double loss_fusion = 0;
  double loss_init = 0;
  double lr = 0;
  double seconds = 0;
  double grad_norm = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;

  /// Header: epoch,loss,loss_fusion,loss_init,lr,seconds
  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
};

// ---------------------------------------------------------------------------
// Checkpoints

template <typename T>
void save_model(const std::filesystem::path& dir, const RecurrentModel<T>& model);

template <typename T>
std::unique_ptr<RecurrentModel<T>> load_model(const std::filesystem::path& dir);

/// Trainer over a float or double model. The model and provider must
/// outlive the trainer.
template <typename T>
class Trainer {
 public:
  Trainer(RecurrentModel<T>& model, SequenceProvider& data, TrainConfig cfg);

  /// Restores parameters, optimizer moments and the epoch counter.
  void resume(const std::filesystem::path& checkpoint_dir);

  /// Runs one epoch. Throws NumericError on a non-finite loss and IoError
  /// when the provider is exhausted.
  EpochRecord run_epoch();

  /// Runs until cfg.max_epochs, writing checkpoints to `checkpoint_dir`
  /// (if non-empty) at the configured cadence and after the last epoch.
  TrainReport run(const std::filesystem::path& checkpoint_dir = {},
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

  void save_checkpoint(const std::filesystem::path& dir) const;

  std::int64_t next_epoch() const { return epoch_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  RecurrentModel<T>& model_;
  SequenceProvider& data_;
  TrainConfig cfg_;
  AdamOptimizer<T> optimizer_;
  std::int64_t epoch_ = 0;
};

/// Frames of a batch converted to the model's precision.
template <typename T>
std::vector<FrameInput<T>> batch_frames(const SequenceBatch& batch);
template <typename T>
std::vector<Tensor<T>> batch_targets(const SequenceBatch& batch);

}  // namespace gruvd
