// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference check of every model parameter through a short unrolled
// sequence, in double precision.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gruvd/cell.hpp"

namespace gruvd {

struct GradcheckConfig {
  ModelKind kind = ModelKind::kGruVd;
  BlockKind block_kind = BlockKind::kPlain;
  int channels = 1;
  int height = 6;
  int width = 6;
  int hidden_channels = 4;
  int num_blocks = 1;
  int seq_len = 3;
  std::uint64_t seed = 1;
  double epsilon = 1e-6;
  double tolerance = 1e-4;
  /// Negative control: routes the fused outputs through an identity whose
  /// backward doubles the gradient.
  bool inject_fault = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const GradcheckConfig& c);
/// Rejects unknown keys; missing keys keep their current value.
void from_json(const nlohmann::json& j, GradcheckConfig& c);

struct ParameterCheck {
  std::string name;
  std::size_t count = 0;
  /// max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|)
  double max_rel_error = 0;
  double max_abs_error = 0;
  double grad_scale = 0;  // max_i |analytic_i|
};

struct GradcheckReport {
  std::vector<ParameterCheck> parameters;
  double max_rel_error = 0;
  double tolerance = 0;
  double loss = 0;
  bool passed = false;

  void write(std::ostream& out) const;
};

GradcheckReport run_gradcheck(const GradcheckConfig& config);

}  // namespace gruvd
