// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, index), so results never depend on evaluation order or
// thread count.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gruvd::rng {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return mix64(mix64(mix64(seed) ^ stream) ^ index);
}

/// Uniform in the open interval (0, 1).
inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return (static_cast<double>(hash(seed, stream, index) >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two decorrelated uniforms.
inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const double u1 = uniform(seed, stream, 2 * index);
  const double u2 = uniform(seed, stream, 2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Sequential convenience wrapper over the counter functions.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() { return hash(seed_, stream_, counter_++); }
  double next_uniform() { return uniform(seed_, stream_, counter_++); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace gruvd::rng
