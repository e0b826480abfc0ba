// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

// Binary tensor container used by checkpoints.
//
//   bytes 0..3   magic "GVTD"
//   u32          rank
//   u64 x rank   dimensions
//   f32 x numel  values
//
// All integers and floats are little-endian.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "gruvd/tensor.hpp"

namespace gruvd {

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t);

/// Throws ParseError naming the byte offset of the first bad field.
template <typename T>
Tensor<T> read_tensor(std::istream& in);

template <typename T>
void save_tensors(const std::filesystem::path& path, const std::vector<Tensor<T>>& tensors);

template <typename T>
std::vector<Tensor<T>> load_tensors(const std::filesystem::path& path);

}  // namespace gruvd
