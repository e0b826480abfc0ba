// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include "gruvd/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gruvd/errors.hpp"
#include "gruvd/random.hpp"

namespace gruvd {

void NoiseParams::validate() const {
  if (!(a >= 0.0) || !(b >= 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw ConfigError("noise params need finite a >= 0 and b >= 0 (a=" + std::to_string(a) +
                      ", b=" + std::to_string(b) + ")");
  }
}

void SensorProfile::validate() const {
  if (table.empty()) throw ConfigError("sensor profile '" + name + "' has an empty ISO table");
  for (const auto& [iso, params] : table) {
    if (iso <= 0) throw ConfigError("sensor profile ISO keys must be positive");
    params.validate();
  }
  if (!(signal_min < signal_max)) throw ConfigError("sensor profile signal_range must be increasing");
}

SensorProfile default_profile() {
  SensorProfile p;
  p.name = "synthetic-5iso";
  // Gain doubles per step: shot coefficient scales with gain, readout
  // variance with gain squared.
  double gain = 1.0;
  for (int iso : {1600, 3200, 6400, 12800, 25600}) {
    p.table[iso] = NoiseParams{2.0e-4 * gain, 2.0e-5 * gain * gain};
    gain *= 2.0;
  }
  return p;
}

SensorProfile constant_profile(NoiseParams params, std::string name) {
  SensorProfile p;
  p.name = std::move(name);
  p.table[1600] = params;
  return p;
}

void to_json(nlohmann::json& j, const SensorProfile& p) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [iso, params] : p.table) {
    table.push_back({{"iso", iso}, {"a", params.a}, {"b", params.b}});
  }
  j = nlohmann::json{
      {"name", p.name}, {"signal_range", {p.signal_min, p.signal_max}}, {"table", table}};
}

void from_json(const nlohmann::json& j, SensorProfile& p) {
  p = SensorProfile{};
  p.name = j.value("name", std::string("unnamed"));
  if (j.contains("signal_range")) {
    const auto& r = j.at("signal_range");
    if (!r.is_array() || r.size() != 2) throw ConfigError("signal_range must be [min, max]");
    p.signal_min = r[0].get<double>();
    p.signal_max = r[1].get<double>();
  }
  for (const auto& e : j.at("table")) {
    const int iso = e.at("iso").get<int>();
    if (p.table.count(iso)) throw ConfigError("duplicate ISO " + std::to_string(iso));
    p.table[iso] = NoiseParams{e.at("a").get<double>(), e.at("b").get<double>()};
  }
  p.validate();
}

SensorProfile read_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sensor profile " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("sensor profile " + path.string() + ": " + e.what());
  }
  return j.get<SensorProfile>();
}

TensorD noise_variance(const NoiseParams& params, const TensorD& y, double signal_min) {
  const auto yv = y.data();
  std::vector<double> out(yv.size());
  for (std::size_t i = 0; i < yv.size(); ++i) {
    out[i] = params.a * std::max(yv[i], signal_min) + params.b;
  }
  return TensorD(y.shape(), std::move(out));
}

TensorD add_noise(const NoiseParams& params, const TensorD& y_clean, std::uint64_t seed,
                  const NoiseOptions& options) {
  params.validate();
  const auto yv = y_clean.data();
  std::vector<double> out(yv.size());
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double var = params.a * std::max(yv[i], options.signal_min) + params.b;
    double x = yv[i];
    if (var > 0.0) x += std::sqrt(var) * rng::normal(seed, 0, i);
    if (options.clip) x = std::clamp(x, options.signal_min, options.signal_max);
    out[i] = x;
  }
  return TensorD(y_clean.shape(), std::move(out));
}

TensorD std_map(const NoiseParams& params, const TensorD& x_observed) {
  const auto xv = x_observed.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = std::sqrt(std::max(params.a * xv[i] + params.b, 0.0));
  }
  return TensorD(x_observed.shape(), std::move(out));
}

NoiseParams lookup_iso(const SensorProfile& profile, int iso) {
  if (profile.table.empty()) {
    throw ConfigError("sensor profile '" + profile.name + "' has an empty ISO table");
  }
  if (iso <= 0) throw ConfigError("ISO must be positive, got " + std::to_string(iso));
  const auto hi = profile.table.lower_bound(iso);
  if (hi != profile.table.end() && hi->first == iso) return hi->second;
  if (hi == profile.table.begin()) return hi->second;
  if (hi == profile.table.end()) return std::prev(hi)->second;
  const auto lo = std::prev(hi);
  const double t = (std::log(static_cast<double>(iso)) - std::log(static_cast<double>(lo->first))) /
                   (std::log(static_cast<double>(hi->first)) -
                    std::log(static_cast<double>(lo->first)));
  auto interp = [t](double v0, double v1) {
    if (v0 > 0.0 && v1 > 0.0) return std::exp(std::log(v0) + t * (std::log(v1) - std::log(v0)));
    return v0 + t * (v1 - v0);
  };
  return NoiseParams{interp(lo->second.a, hi->second.a), interp(lo->second.b, hi->second.b)};
}

}  // namespace gruvd
