// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include "gruvd/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "gruvd/errors.hpp"
#include "gruvd/serialize.hpp"

namespace gruvd {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (seq_len < 1 || patch < 1 || batch < 1) {
    throw ConfigError("seq_len, patch and batch must be >= 1");
  }
  if (!(lr0 > 0.0) || lr_decay_every < 1 || !(lr_decay_factor > 0.0)) {
    throw ConfigError("lr0, lr_decay_every and lr_decay_factor must be positive");
  }
  if (!(w1 >= 0.0) || !(w2 >= 0.0) || !(w1 + w2 > 0.0)) {
    throw ConfigError("loss weights need w1 >= 0, w2 >= 0 and w1 + w2 > 0");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_eps > 0.0)) {
    throw ConfigError("adam betas must lie in [0,1) and eps must be positive");
  }
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
  if (bptt_truncate < 0) throw ConfigError("bptt_truncate must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"seq_len", c.seq_len},
                     {"patch", c.patch},
                     {"batch", c.batch},
                     {"lr0", c.lr0},
                     {"lr_decay_every", c.lr_decay_every},
                     {"lr_decay_factor", c.lr_decay_factor},
                     {"w1", c.w1},
                     {"w2", c.w2},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"seed", c.seed},
                     {"max_epochs", c.max_epochs},
                     {"grad_clip", c.grad_clip},
                     {"bptt_truncate", c.bptt_truncate},
                     {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "seq_len") c.seq_len = value.get<int>();
    else if (key == "patch") c.patch = value.get<int>();
    else if (key == "batch") c.batch = value.get<int>();
    else if (key == "lr0") c.lr0 = value.get<double>();
    else if (key == "lr_decay_every") c.lr_decay_every = value.get<std::int64_t>();
    else if (key == "lr_decay_factor") c.lr_decay_factor = value.get<double>();
    else if (key == "w1") c.w1 = value.get<double>();
    else if (key == "w2") c.w2 = value.get<double>();
    else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
    else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
    else if (key == "adam_eps") c.adam_eps = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "max_epochs") c.max_epochs = value.get<std::int64_t>();
    else if (key == "grad_clip") c.grad_clip = value.get<double>();
    else if (key == "bptt_truncate") c.bptt_truncate = value.get<int>();
    else if (key == "checkpoint_every") c.checkpoint_every = value.get<std::int64_t>();
    else throw ConfigError("unknown train config key '" + key + "'");
  }
}

double learning_rate(const TrainConfig& cfg, std::int64_t epoch) {
  const auto drops = static_cast<double>(epoch / cfg.lr_decay_every);
  return cfg.lr0 / std::pow(cfg.lr_decay_factor, drops);
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
Tensor<T> weighted_l1_loss(const Tensor<T>& y, const Tensor<T>& s, const Tensor<T>& y_true, T w1,
                           T w2) {
  if (y.shape() != y_true.shape() || s.shape() != y_true.shape()) {
    throw ShapeError("weighted_l1_loss: shapes " + shape_string(y.shape()) + ", " +
                     shape_string(s.shape()) + " vs target " + shape_string(y_true.shape()));
  }
  return scale(mean(abs(y - y_true)), w1) + scale(mean(abs(s - y_true)), w2);
}

template <typename T>
SequenceLoss<T> sequence_loss(std::span<const CellOutput<T>> outputs,
                              std::span<const Tensor<T>> targets, T w1, T w2) {
  if (outputs.empty() || outputs.size() != targets.size()) {
    throw ShapeError("sequence_loss: " + std::to_string(outputs.size()) + " outputs vs " +
                     std::to_string(targets.size()) + " targets");
  }
  SequenceLoss<T> out;
  Tensor<T> acc;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    if (outputs[t].y.shape() != targets[t].shape() || outputs[t].s.shape() != targets[t].shape()) {
      throw ShapeError("sequence_loss: frame " + std::to_string(t) + " output " +
                       shape_string(outputs[t].y.shape()) + " vs target " +
                       shape_string(targets[t].shape()));
    }
    const Tensor<T> fusion = mean(abs(outputs[t].y - targets[t]));
    const Tensor<T> initial = mean(abs(outputs[t].s - targets[t]));
    out.fusion += static_cast<double>(fusion.item());
    out.initial += static_cast<double>(initial.item());
    const Tensor<T> frame_loss = scale(fusion, w1) + scale(initial, w2);
    acc = acc.defined() ? acc + frame_loss : frame_loss;
  }
  const T inv = T(1) / static_cast<T>(outputs.size());
  out.total = scale(acc, inv);
  out.fusion /= static_cast<double>(outputs.size());
  out.initial /= static_cast<double>(outputs.size());
  return out;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
               std::int64_t t, double lr, const AdamHyper& hyper, double grad_scale) {
  if (t < 1) throw UsageError("adam step count must be >= 1");
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  }
  const T b1 = static_cast<T>(hyper.beta1);
  const T b2 = static_cast<T>(hyper.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(hyper.beta1, static_cast<double>(t)));
  const T bc2 = static_cast<T>(1.0 - std::pow(hyper.beta2, static_cast<double>(t)));
  const T step = static_cast<T>(lr);
  const T eps = static_cast<T>(hyper.eps);
  const T gs = static_cast<T>(grad_scale);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i] * gs;
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const T m_hat = m[i] / bc1;
    const T v_hat = v[i] / bc2;
    param[i] -= step * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
AdamOptimizer<T>::AdamOptimizer(const RecurrentModel<T>& model) {
  for (const auto& p : model.parameters()) {
    m_.emplace_back(p.value.numel(), T(0));
    v_.emplace_back(p.value.numel(), T(0));
    shapes_.push_back(p.value.shape());
  }
}

template <typename T>
double AdamOptimizer<T>::step(RecurrentModel<T>& model, double lr, const AdamHyper& hyper,
                              double clip) {
  auto params = model.parameters();
  if (params.size() != m_.size()) throw UsageError("optimizer does not match the model");
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.value.has_grad()) continue;
    for (T g : p.value.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  const double scale_factor = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
  ++t_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value.has_grad()) continue;
    adam_step<T>(params[i].value.mutable_data(), params[i].value.grad(), m_[i], v_[i], t_, lr,
                 hyper, scale_factor);
  }
  return norm;
}

template <typename T>
void AdamOptimizer<T>::save(const fs::path& path) const {
  std::vector<Tensor<T>> tensors;
  for (std::size_t i = 0; i < m_.size(); ++i) tensors.emplace_back(shapes_[i], m_[i]);
  for (std::size_t i = 0; i < v_.size(); ++i) tensors.emplace_back(shapes_[i], v_[i]);
  save_tensors(path, tensors);
}

template <typename T>
void AdamOptimizer<T>::load(const fs::path& path, std::int64_t t) {
  auto tensors = load_tensors<T>(path);
  if (tensors.size() != 2 * m_.size()) {
    throw ConfigError("optimizer state in " + path.string() + " has " +
                      std::to_string(tensors.size()) + " tensors, expected " +
                      std::to_string(2 * m_.size()));
  }
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const auto& a = tensors[i];
    const auto& b = tensors[m_.size() + i];
    if (a.shape() != shapes_[i] || b.shape() != shapes_[i]) {
      throw ConfigError("optimizer moment " + std::to_string(i) + " has the wrong shape");
    }
    m_[i].assign(a.data().begin(), a.data().end());
    v_[i].assign(b.data().begin(), b.data().end());
  }
  t_ = t;
}

// ---------------------------------------------------------------------------
// Report

void TrainReport::write_csv(std::ostream& out) const {
  out << "epoch,loss,loss_fusion,loss_init,lr,seconds\n";
  char line[256];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g,%.9g,%.9g,%.4f\n",
                  static_cast<long long>(e.epoch), e.loss, e.loss_fusion, e.loss_init, e.lr,
                  e.seconds);
    out << line;
  }
}

void TrainReport::write_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(out);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

template <typename T>
ModelConfig read_model_config(const fs::path& dir) {
  const auto j = read_json(dir / "model.json");
  try {
    return j.at("model").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError((dir / "model.json").string() + ": " + e.what());
  }
}

}  // namespace

template <typename T>
void save_model(const fs::path& dir, const RecurrentModel<T>& model) {
  ensure_dir(dir);
  nlohmann::json gates = nlohmann::json::object();
  for (const auto& [role, net] : model.gates()) gates[role] = net->spec();
  nlohmann::json names = nlohmann::json::array();
  std::vector<Tensor<T>> values;
  for (const auto& p : model.parameters()) {
    names.push_back(p.name);
    values.push_back(p.value);
  }
  write_json(dir / "model.json", {{"kind", to_string(model.kind())},
                                  {"model", model.config()},
                                  {"gates", gates},
                                  {"parameters", names}});
  save_tensors(dir / "parameters.gvtd", values);
}

template <typename T>
std::unique_ptr<RecurrentModel<T>> load_model(const fs::path& dir) {
  const ModelConfig config = read_model_config<T>(dir);
  config.validate();
  auto model = build_model<T>(config, 0);
  const auto j = read_json(dir / "model.json");
  const auto params = model->parameters();
  if (j.contains("parameters")) {
    const auto& names = j.at("parameters");
    if (names.size() != params.size()) {
      throw ConfigError("checkpoint " + dir.string() + " lists " + std::to_string(names.size()) +
                        " parameters, model has " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (names[i].get<std::string>() != params[i].name) {
        throw ConfigError("checkpoint parameter " + names[i].get<std::string>() +
                          " does not match " + params[i].name);
      }
    }
  }
  const auto values = load_tensors<T>(dir / "parameters.gvtd");
  model->load_parameters(values);
  return model;
}

// ---------------------------------------------------------------------------
// Trainer

template <typename T>
std::vector<FrameInput<T>> batch_frames(const SequenceBatch& batch) {
  std::vector<FrameInput<T>> frames;
  for (std::size_t t = 0; t < batch.frames(); ++t) {
    frames.push_back({frame_at(batch.noisy, t).cast<T>(), frame_at(batch.delta, t).cast<T>()});
  }
  return frames;
}

template <typename T>
std::vector<Tensor<T>> batch_targets(const SequenceBatch& batch) {
  std::vector<Tensor<T>> targets;
  for (std::size_t t = 0; t < batch.frames(); ++t) {
    targets.push_back(frame_at(batch.clean, t).cast<T>());
  }
  return targets;
}

template <typename T>
Trainer<T>::Trainer(RecurrentModel<T>& model, SequenceProvider& data, TrainConfig cfg)
    : model_(model), data_(data), cfg_(std::move(cfg)), optimizer_(model) {
  cfg_.validate();
}

template <typename T>
void Trainer<T>::resume(const fs::path& dir) {
  const ModelConfig stored = read_model_config<T>(dir);
  if (!(stored == model_.config())) {
    throw ConfigError("checkpoint " + dir.string() + " was written for a different model config");
  }
  const auto loaded = load_model<T>(dir);
  std::vector<Tensor<T>> values;
  for (const auto& p : loaded->parameters()) values.push_back(p.value);
  model_.load_parameters(values);
  const auto state = read_json(dir / "state.json");
  epoch_ = state.at("epoch").get<std::int64_t>();
  optimizer_.load(dir / "optimizer.gvtd", state.at("adam_t").get<std::int64_t>());
}

template <typename T>
EpochRecord Trainer<T>::run_epoch() {
  const auto start = std::chrono::steady_clock::now();
  auto batch = data_.batch_for_epoch(epoch_);
  if (!batch) throw IoError("sequence provider exhausted at epoch " + std::to_string(epoch_));

  const auto frames = batch_frames<T>(*batch);
  const auto targets = batch_targets<T>(*batch);
  model_.zero_grad();

  RunOptions<T> opts;
  opts.bptt_truncate = cfg_.bptt_truncate;
  const auto outputs = run_sequence<T>(model_, frames, opts);
  const auto loss = sequence_loss<T>(outputs, targets, static_cast<T>(cfg_.w1),
                                     static_cast<T>(cfg_.w2));
  const double value = static_cast<double>(loss.total.item());
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch_) +
                       " (fusion=" + std::to_string(loss.fusion) +
                       ", initial=" + std::to_string(loss.initial) + ")");
  }
  backward(loss.total);

  EpochRecord rec;
  rec.epoch = epoch_;
  rec.loss = value;
  rec.loss_fusion = loss.fusion;
  rec.loss_init = loss.initial;
  rec.lr = learning_rate(cfg_, epoch_);
  rec.grad_norm = optimizer_.step(model_, rec.lr,
                                  {cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps},
                                  cfg_.grad_clip);
  ++epoch_;
  rec.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

template <typename T>
TrainReport Trainer<T>::run(const fs::path& checkpoint_dir,
                            const std::function<void(const EpochRecord&)>& on_epoch) {
  TrainReport report;
  while (epoch_ < cfg_.max_epochs) {
    report.epochs.push_back(run_epoch());
    if (on_epoch) on_epoch(report.epochs.back());
    if (!checkpoint_dir.empty() && cfg_.checkpoint_every > 0 && epoch_ < cfg_.max_epochs &&
        epoch_ % cfg_.checkpoint_every == 0) {
      save_checkpoint(checkpoint_dir);
    }
  }
  if (!checkpoint_dir.empty()) save_checkpoint(checkpoint_dir);
  return report;
}

template <typename T>
void Trainer<T>::save_checkpoint(const fs::path& dir) const {
  save_model(dir, model_);
  optimizer_.save(dir / "optimizer.gvtd");
  write_json(dir / "train_config.json", cfg_);
  write_json(dir / "state.json", {{"epoch", epoch_}, {"adam_t", optimizer_.t()}});
}

#define GRUVD_INSTANTIATE(T)                                                                    \
  template Tensor<T> weighted_l1_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                         T, T);                                                 \
  template SequenceLoss<T> sequence_loss<T>(std::span<const CellOutput<T>>,                     \
                                            std::span<const Tensor<T>>, T, T);                  \
  template void adam_step<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,      \
                             std::int64_t, double, const AdamHyper&, double);                   \
  template class AdamOptimizer<T>;                                                              \
  template void save_model<T>(const fs::path&, const RecurrentModel<T>&);                       \
  template std::unique_ptr<RecurrentModel<T>> load_model<T>(const fs::path&);                   \
  template class Trainer<T>;                                                                    \
  template std::vector<FrameInput<T>> batch_frames<T>(const SequenceBatch&);                    \
  template std::vector<Tensor<T>> batch_targets<T>(const SequenceBatch&);

GRUVD_INSTANTIATE(float)
GRUVD_INSTANTIATE(double)

#undef GRUVD_INSTANTIATE

}  // namespace gruvd
