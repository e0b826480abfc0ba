// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Convolutional gate networks. Every gate of a recurrent cell is one of
// these: a 3x3 head conv + ReLU, (num_blocks - 1) residual body blocks, and a
// 3x3 tail conv followed by the final activation. All convs are stride 1 with
// same padding, so spatial size is preserved.
//
// Body blocks:
//   plain    x + relu(conv3x3(x))
//   distill  t = relu(conv3x3(x)); keep the first hidden/4 channels of t as
//            a shortcut, refine the rest with relu(conv3x3(.)), concatenate
//            and fuse with a 1x1 conv; x + fuse(...)

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gruvd/tensor.hpp"

namespace gruvd {

enum class BlockKind { kPlain, kDistill };

struct ConvBlockSpec {
  int in_channels = 1;
  int hidden_channels = 16;
  int out_channels = 1;
  int num_blocks = 3;
  BlockKind block_kind = BlockKind::kPlain;
  Activation final_activation = Activation::kNone;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const ConvBlockSpec&) const = default;
};

inline constexpr int kKernelSize = 3;

std::string to_string(BlockKind kind);
std::string to_string(Activation act);
BlockKind parse_block_kind(std::string_view s);
Activation parse_activation(std::string_view s);

void to_json(nlohmann::json& j, const ConvBlockSpec& spec);
void from_json(const nlohmann::json& j, ConvBlockSpec& spec);

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> value;
};

template <typename T>
class Backbone {
 public:
  /// Kaiming-normal conv weights (fan-in), zero biases. Deterministic in seed.
  static Backbone build(const ConvBlockSpec& spec, std::uint64_t seed);

  /// `role` names the gate in shape errors.
  Tensor<T> forward(const Tensor<T>& x, std::string_view role = "backbone") const;

  const ConvBlockSpec& spec() const { return spec_; }
  /// Handles alias the backbone's storage.
  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  const Tensor<T>& parameter(std::string_view name) const;

  template <typename U>
  Backbone<U> cast() const {
    Backbone<U> out;
    out.spec_ = spec_;
    for (const auto& p : params_) {
      auto t = p.value.template cast<U>();
      t.set_requires_grad(true);
      out.params_.push_back({p.name, std::move(t)});
    }
    return out;
  }

 private:
  template <typename>
  friend class Backbone;

  Tensor<T> conv(const std::string& prefix, const Tensor<T>& x, int padding) const;

  ConvBlockSpec spec_;
  std::vector<NamedParameter<T>> params_;
};

}  // namespace gruvd
