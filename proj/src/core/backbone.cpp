// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include "gruvd/backbone.hpp"

#include <cmath>

#include "gruvd/errors.hpp"
#include "gruvd/random.hpp"

namespace gruvd {

namespace {

int distill_width(int hidden) { return std::max(1, hidden / 4); }

}  // namespace

void ConvBlockSpec::validate() const {
  if (in_channels < 1 || hidden_channels < 1 || out_channels < 1) {
    throw ConfigError("backbone channel counts must be >= 1 (in=" + std::to_string(in_channels) +
                      ", hidden=" + std::to_string(hidden_channels) +
                      ", out=" + std::to_string(out_channels) + ")");
  }
  if (num_blocks < 1) throw ConfigError("backbone num_blocks must be >= 1");
  if (block_kind == BlockKind::kDistill && hidden_channels < 2) {
    throw ConfigError("distill blocks need hidden_channels >= 2");
  }
}

std::string to_string(BlockKind kind) { return kind == BlockKind::kPlain ? "plain" : "distill"; }

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kNone:
      return "none";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
  }
  return "none";
}

BlockKind parse_block_kind(std::string_view s) {
  if (s == "plain") return BlockKind::kPlain;
  if (s == "distill") return BlockKind::kDistill;
  throw ConfigError("unknown block_kind '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
  if (s == "none") return Activation::kNone;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const ConvBlockSpec& spec) {
  j = nlohmann::json{{"in_channels", spec.in_channels},
                     {"hidden_channels", spec.hidden_channels},
                     {"out_channels", spec.out_channels},
                     {"num_blocks", spec.num_blocks},
                     {"block_kind", to_string(spec.block_kind)},
                     {"final_activation", to_string(spec.final_activation)}};
}

void from_json(const nlohmann::json& j, ConvBlockSpec& spec) {
  spec.in_channels = j.at("in_channels").get<int>();
  spec.hidden_channels = j.at("hidden_channels").get<int>();
  spec.out_channels = j.at("out_channels").get<int>();
  spec.num_blocks = j.at("num_blocks").get<int>();
  spec.block_kind = parse_block_kind(j.at("block_kind").get<std::string>());
  spec.final_activation = parse_activation(j.at("final_activation").get<std::string>());
}

template <typename T>
Backbone<T> Backbone<T>::build(const ConvBlockSpec& spec, std::uint64_t seed) {
  spec.validate();
  Backbone b;
  b.spec_ = spec;
  const auto k = static_cast<std::size_t>(kKernelSize);
  std::uint64_t stream = 0;

  auto add_conv = [&](const std::string& prefix, int c_out, int c_in, std::size_t ksize) {
    Shape ws{static_cast<std::size_t>(c_out), static_cast<std::size_t>(c_in), ksize, ksize};
    std::vector<T> w(shape_numel(ws));
    const double stddev = std::sqrt(2.0 / static_cast<double>(c_in * ksize * ksize));
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = static_cast<T>(stddev * rng::normal(seed, stream, i));
    }
    ++stream;
    b.params_.push_back({prefix + ".weight", Tensor<T>(ws, std::move(w), true)});
    b.params_.push_back(
        {prefix + ".bias", Tensor<T>::zeros(Shape{static_cast<std::size_t>(c_out)}, true)});
  };

  const int h = spec.hidden_channels;
  add_conv("head", h, spec.in_channels, k);
  for (int i = 0; i < spec.num_blocks - 1; ++i) {
    const std::string p = "body." + std::to_string(i);
    if (spec.block_kind == BlockKind::kPlain) {
      add_conv(p, h, h, k);
    } else {
      const int rest = h - distill_width(h);
      add_conv(p + ".conv_a", h, h, k);
      add_conv(p + ".conv_b", rest, rest, k);
      add_conv(p + ".fuse", h, h, 1);
    }
  }
  add_conv("tail", spec.out_channels, h, k);
  return b;
}

template <typename T>
const Tensor<T>& Backbone<T>::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw UsageError("backbone has no parameter '" + std::string(name) + "'");
}

template <typename T>
std::size_t Backbone<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
Tensor<T> Backbone<T>::conv(const std::string& prefix, const Tensor<T>& x, int padding) const {
  return conv2d(x, parameter(prefix + ".weight"), parameter(prefix + ".bias"), 1, padding);
}

template <typename T>
Tensor<T> Backbone<T>::forward(const Tensor<T>& x, std::string_view role) const {
  if (x.rank() != 4) {
    throw ShapeError(std::string(role) + ": input must be [B,C,H,W], got " +
                     shape_string(x.shape()));
  }
  if (x.dim(1) != static_cast<std::size_t>(spec_.in_channels)) {
    throw ShapeError(std::string(role) + ": input has " + std::to_string(x.dim(1)) +
                     " channels, network expects " + std::to_string(spec_.in_channels) +
                     " (input shape " + shape_string(x.shape()) + ")");
  }
  constexpr int pad = kKernelSize / 2;
  const int h = spec_.hidden_channels;
  Tensor<T> feat = relu(conv("head", x, pad));
  for (int i = 0; i < spec_.num_blocks - 1; ++i) {
    const std::string p = "body." + std::to_string(i);
    if (spec_.block_kind == BlockKind::kPlain) {
      feat = feat + relu(conv(p, feat, pad));
    } else {
      const auto q = static_cast<std::size_t>(distill_width(h));
      Tensor<T> t = relu(conv(p + ".conv_a", feat, pad));
      Tensor<T> kept = slice_channels(t, 0, q);
      Tensor<T> refined =
          relu(conv(p + ".conv_b", slice_channels(t, q, static_cast<std::size_t>(h)), pad));
      feat = feat + conv(p + ".fuse", concat_channels({kept, refined}), 0);
    }
  }
  return activation(spec_.final_activation, conv("tail", feat, pad));
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace gruvd
