// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gruvd {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or channel counts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (spec, profile, train config, CLI flag).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// File system failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. Messages name the byte offset.
class ParseError : public IoError {
 public:
  using IoError::IoError;
};

/// Non-finite loss, failed gradient check and similar.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gruvd
