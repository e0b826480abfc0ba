// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include "gruvd/cell.hpp"

#include <algorithm>

#include "gruvd/errors.hpp"
#include "gruvd/random.hpp"

namespace gruvd {

std::string to_string(ModelKind kind) { return kind == ModelKind::kGruVd ? "gru_vd" : "gru"; }

ModelKind parse_model_kind(std::string_view s) {
  if (s == "gru_vd") return ModelKind::kGruVd;
  if (s == "gru") return ModelKind::kGru;
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (channels != 1 && channels != 3) {
    throw ConfigError("channels must be 1 or 3, got " + std::to_string(channels));
  }
  reset_spec().validate();
  candidate_spec().validate();
  update_spec().validate();
}

ConvBlockSpec ModelConfig::reset_spec() const {
  return {2 * channels, hidden_channels, channels, num_blocks, block_kind, Activation::kSigmoid};
}

ConvBlockSpec ModelConfig::candidate_spec() const {
  if (kind == ModelKind::kGru) {
    // tanh is applied by the cell.
    return {2 * channels, hidden_channels, channels, num_blocks, block_kind, Activation::kNone};
  }
  return {3 * channels, hidden_channels, channels, num_blocks, block_kind, Activation::kRelu};
}

ConvBlockSpec ModelConfig::update_spec() const {
  const int in = (kind == ModelKind::kGruVd && update_gate_extra_inputs) ? 4 * channels
                                                                         : 2 * channels;
  return {in, hidden_channels, channels, num_blocks, block_kind, Activation::kSigmoid};
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},
                     {"channels", c.channels},
                     {"hidden_channels", c.hidden_channels},
                     {"num_blocks", c.num_blocks},
                     {"block_kind", to_string(c.block_kind)},
                     {"update_gate_extra_inputs", c.update_gate_extra_inputs}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const char* const kKeys[] = {"kind",       "channels",   "hidden_channels",
                                      "num_blocks", "block_kind", "update_gate_extra_inputs"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw ConfigError("unknown model config key '" + key + "'");
    }
  }
  c.kind = parse_model_kind(j.value("kind", to_string(c.kind)));
  c.channels = j.value("channels", c.channels);
  c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
  c.num_blocks = j.value("num_blocks", c.num_blocks);
  c.block_kind = parse_block_kind(j.value("block_kind", to_string(c.block_kind)));
  c.update_gate_extra_inputs = j.value("update_gate_extra_inputs", c.update_gate_extra_inputs);
}

// ---------------------------------------------------------------------------
// RecurrentModel

template <typename T>
std::vector<NamedParameter<T>> RecurrentModel<T>::parameters() const {
  std::vector<NamedParameter<T>> out;
  for (const auto& [role, net] : gates()) {
    for (const auto& p : net->parameters()) out.push_back({role + "." + p.name, p.value});
  }
  return out;
}

template <typename T>
std::size_t RecurrentModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [role, net] : gates()) n += net->parameter_count();
  return n;
}

template <typename T>
void RecurrentModel<T>::zero_grad() {
  for (auto& p : parameters()) p.value.zero_grad();
}

template <typename T>
void RecurrentModel<T>::load_parameters(std::span<const Tensor<T>> values) {
  auto params = parameters();
  if (values.size() != params.size()) {
    throw ShapeError("model expects " + std::to_string(params.size()) + " parameter tensors, got " +
                     std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].shape() != params[i].value.shape()) {
      throw ShapeError("parameter " + params[i].name + " has shape " +
                       shape_string(params[i].value.shape()) + ", stored tensor has " +
                       shape_string(values[i].shape()));
    }
    auto dst = params[i].value.mutable_data();
    auto src = values[i].data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

namespace {

template <typename T>
void check_frame(const char* gate, const ModelConfig& cfg, const Tensor<T>& x,
                 const Tensor<T>& y_prev) {
  if (!x.defined() || x.rank() != 4) {
    throw ShapeError(std::string(gate) + " input: frame must be [B,C,H,W]" +
                     (x.defined() ? ", got " + shape_string(x.shape()) : std::string()));
  }
  if (x.dim(1) != static_cast<std::size_t>(cfg.channels)) {
    throw ShapeError(std::string(gate) + " input: frame " + shape_string(x.shape()) + " has " +
                     std::to_string(x.dim(1)) + " channels, model expects " +
                     std::to_string(cfg.channels));
  }
  if (!y_prev.defined() || y_prev.shape() != x.shape()) {
    throw ShapeError(std::string(gate) + " input: carry " +
                     (y_prev.defined() ? shape_string(y_prev.shape()) : std::string("undefined")) +
                     " does not match frame " + shape_string(x.shape()));
  }
}

template <typename T>
void check_override(const char* what, const Tensor<T>& t, const Tensor<T>& x) {
  if (t.defined() && t.shape() != x.shape()) {
    throw ShapeError(std::string("override for ") + what + " has shape " +
                     shape_string(t.shape()) + ", frame is " + shape_string(x.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// GRU-VD

template <typename T>
GruVdModel<T>::GruVdModel(ModelConfig config, Backbone<T> r, Backbone<T> s, Backbone<T> f)
    : RecurrentModel<T>(std::move(config)),
      reset_net(std::move(r)),
      denoise_net(std::move(s)),
      update_net(std::move(f)) {}

template <typename T>
GruVdModel<T> GruVdModel<T>::build(const ModelConfig& config, std::uint64_t seed) {
  ModelConfig c = config;
  c.kind = ModelKind::kGruVd;
  c.validate();
  return GruVdModel(c, Backbone<T>::build(c.reset_spec(), rng::hash(seed, 1, 0)),
                    Backbone<T>::build(c.candidate_spec(), rng::hash(seed, 2, 0)),
                    Backbone<T>::build(c.update_spec(), rng::hash(seed, 3, 0)));
}

template <typename T>
std::vector<std::pair<std::string, const Backbone<T>*>> GruVdModel<T>::gates() const {
  return {{"reset", &reset_net}, {"denoise", &denoise_net}, {"update", &update_net}};
}

template <typename T>
CellOutput<T> gru_vd_step(const GruVdModel<T>& m, const Tensor<T>& x, const Tensor<T>& delta,
                          const CellState<T>& state, const StepOverrides<T>& overrides) {
  const ModelConfig& cfg = m.config();
  const Tensor<T>& y_prev = state.y_prev;
  check_frame("reset gate", cfg, x, y_prev);
  if (!delta.defined() || delta.rank() != 4 || delta.dim(0) != x.dim(0) ||
      delta.dim(2) != x.dim(2) || delta.dim(3) != x.dim(3) ||
      (delta.dim(1) != 1 && delta.dim(1) != x.dim(1))) {
    throw ShapeError("reset gate input: noise map " +
                     (delta.defined() ? shape_string(delta.shape()) : std::string("undefined")) +
                     " incompatible with frame " + shape_string(x.shape()));
  }
  check_override("s", overrides.s, x);
  check_override("f", overrides.f, x);

  const Tensor<T> d = broadcast_channels(delta, x.dim(1));
  CellOutput<T> out;
  out.r = m.reset_net.forward(concat_channels({d, abs(x - y_prev)}), "reset gate");
  out.s = overrides.s.defined()
              ? overrides.s
              : m.denoise_net.forward(concat_channels({out.r * y_prev, x, d}), "denoise gate");
  if (overrides.f.defined()) {
    out.f = overrides.f;
  } else if (cfg.update_gate_extra_inputs) {
    out.f = m.update_net.forward(concat_channels({out.s, y_prev, out.r, d}), "update gate");
  } else {
    out.f = m.update_net.forward(concat_channels({out.s, y_prev}), "update gate");
  }
  out.y = blend(y_prev, out.s, out.f);
  return out;
}

template <typename T>
CellOutput<T> GruVdModel<T>::step(const Tensor<T>& x, const Tensor<T>& delta,
                                  const CellState<T>& state,
                                  const StepOverrides<T>& overrides) const {
  return gru_vd_step(*this, x, delta, state, overrides);
}

// ---------------------------------------------------------------------------
// Baseline GRU

template <typename T>
GruModel<T>::GruModel(ModelConfig config, Backbone<T> r, Backbone<T> s, Backbone<T> f)
    : RecurrentModel<T>(std::move(config)),
      reset_net(std::move(r)),
      candidate_net(std::move(s)),
      update_net(std::move(f)) {}

template <typename T>
GruModel<T> GruModel<T>::build(const ModelConfig& config, std::uint64_t seed) {
  ModelConfig c = config;
  c.kind = ModelKind::kGru;
  c.validate();
  return GruModel(c, Backbone<T>::build(c.reset_spec(), rng::hash(seed, 1, 0)),
                  Backbone<T>::build(c.candidate_spec(), rng::hash(seed, 2, 0)),
                  Backbone<T>::build(c.update_spec(), rng::hash(seed, 3, 0)));
}

template <typename T>
std::vector<std::pair<std::string, const Backbone<T>*>> GruModel<T>::gates() const {
  return {{"reset", &reset_net}, {"candidate", &candidate_net}, {"update", &update_net}};
}

template <typename T>
CellOutput<T> gru_step(const GruModel<T>& m, const Tensor<T>& x, const CellState<T>& state,
                       const StepOverrides<T>& overrides) {
  const Tensor<T>& y_prev = state.y_prev;
  check_frame("reset gate", m.config(), x, y_prev);
  check_override("s", overrides.s, x);
  check_override("f", overrides.f, x);

  const Tensor<T> xy = concat_channels({x, y_prev});
  CellOutput<T> out;
  out.r = m.reset_net.forward(xy, "reset gate");
  out.s = overrides.s.defined()
              ? overrides.s
              : tanh(m.candidate_net.forward(concat_channels({x, out.r * y_prev}),
                                             "candidate gate"));
  out.f = overrides.f.defined() ? overrides.f : m.update_net.forward(xy, "update gate");
  out.y = blend(y_prev, out.s, out.f);
  return out;
}

template <typename T>
CellOutput<T> GruModel<T>::step(const Tensor<T>& x, const Tensor<T>&, const CellState<T>& state,
                                const StepOverrides<T>& overrides) const {
  return gru_step(*this, x, state, overrides);
}

// ---------------------------------------------------------------------------

template <typename T>
std::unique_ptr<RecurrentModel<T>> build_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.kind == ModelKind::kGru) {
    return std::make_unique<GruModel<T>>(GruModel<T>::build(config, seed));
  }
  return std::make_unique<GruVdModel<T>>(GruVdModel<T>::build(config, seed));
}

template <typename U, typename T>
std::unique_ptr<RecurrentModel<U>> cast_model(const RecurrentModel<T>& model) {
  auto out = build_model<U>(model.config(), 0);
  std::vector<Tensor<U>> values;
  for (const auto& p : model.parameters()) values.push_back(p.value.template cast<U>());
  out->load_parameters(values);
  return out;
}

template <typename T>
CellState<T> init_state(const Tensor<T>& x0) {
  return CellState<T>{x0, 0};
}

template <typename T>
std::vector<CellOutput<T>> run_sequence(const RecurrentModel<T>& m,
                                        std::span<const FrameInput<T>> frames,
                                        const RunOptions<T>& options) {
  if (frames.empty()) throw UsageError("run_sequence needs at least one frame");
  const Shape& frame_shape = frames[0].x.shape();
  std::vector<CellOutput<T>> outputs;
  outputs.reserve(frames.size());
  CellState<T> state = init_state(frames[0].x);
  for (std::size_t n = 0; n < frames.size(); ++n) {
    if (frames[n].x.shape() != frame_shape) {
      throw ShapeError("run_sequence: frame " + std::to_string(n) + " has shape " +
                       shape_string(frames[n].x.shape()) + ", frame 0 has " +
                       shape_string(frame_shape));
    }
    const StepOverrides<T> ov = options.overrides ? options.overrides(n) : StepOverrides<T>{};
    outputs.push_back(m.step(frames[n].x, frames[n].delta, state, ov));
    state.y_prev = outputs.back().y;
    if (options.bptt_truncate > 0 && (n + 1) % static_cast<std::size_t>(options.bptt_truncate) == 0) {
      state.y_prev = state.y_prev.detach();
    }
    state.frame_index = static_cast<int>(n) + 1;
  }
  return outputs;
}

#define GRUVD_INSTANTIATE(T)                                                                   \
  template class RecurrentModel<T>;                                                            \
  template class GruVdModel<T>;                                                                \
  template class GruModel<T>;                                                                  \
  template std::unique_ptr<RecurrentModel<T>> build_model<T>(const ModelConfig&, std::uint64_t); \
  template CellOutput<T> gru_vd_step<T>(const GruVdModel<T>&, const Tensor<T>&,                \
                                        const Tensor<T>&, const CellState<T>&,                 \
                                        const StepOverrides<T>&);                              \
  template CellOutput<T> gru_step<T>(const GruModel<T>&, const Tensor<T>&, const CellState<T>&, \
                                     const StepOverrides<T>&);                                 \
  template CellState<T> init_state<T>(const Tensor<T>&);                                       \
  template std::vector<CellOutput<T>> run_sequence<T>(                                         \
      const RecurrentModel<T>&, std::span<const FrameInput<T>>, const RunOptions<T>&);

GRUVD_INSTANTIATE(float)
GRUVD_INSTANTIATE(double)

#undef GRUVD_INSTANTIATE

template std::unique_ptr<RecurrentModel<double>> cast_model<double, float>(
    const RecurrentModel<float>&);
template std::unique_ptr<RecurrentModel<float>> cast_model<float, double>(
    const RecurrentModel<double>&);
template std::unique_ptr<RecurrentModel<float>> cast_model<float, float>(
    const RecurrentModel<float>&);
template std::unique_ptr<RecurrentModel<double>> cast_model<double, double>(
    const RecurrentModel<double>&);

}  // namespace gruvd
