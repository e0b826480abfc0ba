// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Heteroscedastic Gaussian sensor noise: per-pixel variance a*y + b, with a
// the shot coefficient and b the readout variance.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "gruvd/tensor.hpp"

namespace gruvd {

struct NoiseParams {
  double a = 0.0;
  double b = 0.0;

  void validate() const;
  bool operator==(const NoiseParams&) const = default;
};

struct SensorProfile {
  std::string name = "default";
  std::map<int, NoiseParams> table;  // ISO -> params
  double signal_min = 0.0;
  double signal_max = 1.0;

  void validate() const;
};

/// Five-ISO profile (1600..25600) for normalized [0,1] synthetic data.
SensorProfile default_profile();
/// Single-entry profile with the given params at ISO 1600.
SensorProfile constant_profile(NoiseParams params, std::string name = "constant");

void to_json(nlohmann::json& j, const SensorProfile& p);
void from_json(const nlohmann::json& j, SensorProfile& p);
SensorProfile read_profile(const std::filesystem::path& path);

/// a * max(y, signal_min) + b, elementwise.
TensorD noise_variance(const NoiseParams& params, const TensorD& y, double signal_min = 0.0);

struct NoiseOptions {
  double signal_min = 0.0;
  double signal_max = 1.0;
  bool clip = false;  // clamp the noisy output into [signal_min, signal_max]
};

/// x = y + eta with eta(i) ~ N(0, a*y(i) + b). Pixel i draws from the counter
/// stream (seed, i), so the result is independent of traversal order.
TensorD add_noise(const NoiseParams& params, const TensorD& y_clean, std::uint64_t seed,
                  const NoiseOptions& options = {});

/// sqrt(max(a*x + b, 0)) on the observed frame.
TensorD std_map(const NoiseParams& params, const TensorD& x_observed);

/// Exact hit, else geometric interpolation of a and b between the bracketing
/// ISOs (linear in log ISO); clamps outside the table. A zero coefficient at
/// either bracket falls back to linear interpolation of that coefficient.
NoiseParams lookup_iso(const SensorProfile& profile, int iso);

}  // namespace gruvd
