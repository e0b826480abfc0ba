// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Recurrent denoising cells. The carry is the previous fused output y_{n-1}
// in the image domain; all gate maps have the frame's channel count.
//
// GRU-VD step, with d the noise-std map replicated to C channels:
//   r = sigmoid_net(concat(d, |x - y_prev|))
//   s = relu_net(concat(r * y_prev, x, d))
//   f = sigmoid_net(concat(s, y_prev, r, d))
//   y = (1 - f) * y_prev + f * s
//
// Baseline GRU step (no noise map):
//   r = sigmoid_net(concat(x, y_prev))
//   s = tanh(net(concat(x, r * y_prev)))
//   f = sigmoid_net(concat(x, y_prev))
//   y = (1 - f) * y_prev + f * s

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gruvd/backbone.hpp"
#include "gruvd/tensor.hpp"

namespace gruvd {

enum class ModelKind { kGruVd, kGru };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view s);

struct ModelConfig {
  ModelKind kind = ModelKind::kGruVd;
  int channels = 1;
  int hidden_channels = 16;
  int num_blocks = 3;
  BlockKind block_kind = BlockKind::kPlain;
  /// When false the update gate only sees (s, y_prev), i.e. the r and noise
  /// map paths are removed. GRU-VD only.
  bool update_gate_extra_inputs = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  ConvBlockSpec reset_spec() const;
  ConvBlockSpec candidate_spec() const;
  ConvBlockSpec update_spec() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

template <typename T>
struct CellState {
  Tensor<T> y_prev;
  int frame_index = 0;
};

template <typename T>
struct CellOutput {
  Tensor<T> y;  // fused output
  Tensor<T> s;  // candidate (initial denoised frame)
  Tensor<T> r;  // reset / relevance map
  Tensor<T> f;  // update / fusion map
};

/// Test and ablation hook: defined tensors replace the computed s or f.
template <typename T>
struct StepOverrides {
  Tensor<T> s;
  Tensor<T> f;
};

template <typename T>
struct FrameInput {
  Tensor<T> x;      // [B,C,H,W]
  Tensor<T> delta;  // [B,1,H,W] or [B,C,H,W]; ignored by the baseline GRU
};

template <typename T>
class RecurrentModel {
 public:
  virtual ~RecurrentModel() = default;

  virtual CellOutput<T> step(const Tensor<T>& x, const Tensor<T>& delta, const CellState<T>& state,
                             const StepOverrides<T>& overrides = {}) const = 0;

  const ModelConfig& config() const { return config_; }
  ModelKind kind() const { return config_.kind; }

  /// Gate networks in a fixed order with their role prefixes.
  virtual std::vector<std::pair<std::string, const Backbone<T>*>> gates() const = 0;

  /// Fully-qualified parameters ("reset.head.weight", ...). Handles alias the
  /// model's storage.
  std::vector<NamedParameter<T>> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// Copies values in parameters() order. Throws ShapeError on mismatch.
  void load_parameters(std::span<const Tensor<T>> values);

 protected:
  explicit RecurrentModel(ModelConfig config) : config_(std::move(config)) {}
  ModelConfig config_;
};

template <typename T>
class GruVdModel final : public RecurrentModel<T> {
 public:
  static GruVdModel build(const ModelConfig& config, std::uint64_t seed);

  CellOutput<T> step(const Tensor<T>& x, const Tensor<T>& delta, const CellState<T>& state,
                     const StepOverrides<T>& overrides = {}) const override;
  std::vector<std::pair<std::string, const Backbone<T>*>> gates() const override;

  Backbone<T> reset_net;
  Backbone<T> denoise_net;
  Backbone<T> update_net;

 private:
  GruVdModel(ModelConfig config, Backbone<T> r, Backbone<T> s, Backbone<T> f);
};

template <typename T>
class GruModel final : public RecurrentModel<T> {
 public:
  static GruModel build(const ModelConfig& config, std::uint64_t seed);

  CellOutput<T> step(const Tensor<T>& x, const Tensor<T>& delta, const CellState<T>& state,
                     const StepOverrides<T>& overrides = {}) const override;
  std::vector<std::pair<std::string, const Backbone<T>*>> gates() const override;

  Backbone<T> reset_net;
  Backbone<T> candidate_net;
  Backbone<T> update_net;

 private:
  GruModel(ModelConfig config, Backbone<T> r, Backbone<T> s, Backbone<T> f);
};

/// Builds the model named by config.kind.
template <typename T>
std::unique_ptr<RecurrentModel<T>> build_model(const ModelConfig& config, std::uint64_t seed);

/// Same architecture and values in another precision.
template <typename U, typename T>
std::unique_ptr<RecurrentModel<U>> cast_model(const RecurrentModel<T>& model);

template <typename T>
CellOutput<T> gru_vd_step(const GruVdModel<T>& m, const Tensor<T>& x, const Tensor<T>& delta,
                          const CellState<T>& state, const StepOverrides<T>& overrides = {});

template <typename T>
CellOutput<T> gru_step(const GruModel<T>& m, const Tensor<T>& x, const CellState<T>& state,
                       const StepOverrides<T>& overrides = {});

/// y_prev = x0, frame_index = 0.
template <typename T>
CellState<T> init_state(const Tensor<T>& x0);

template <typename T>
struct RunOptions {
  /// 0 keeps the full graph through the carry; k > 0 detaches the carry
  /// after every k frames (truncated BPTT).
  int bptt_truncate = 0;
  std::function<StepOverrides<T>(std::size_t frame)> overrides;
};

template <typename T>
std::vector<CellOutput<T>> run_sequence(const RecurrentModel<T>& m,
                                        std::span<const FrameInput<T>> frames,
                                        const RunOptions<T>& options = {});

}  // namespace gruvd
