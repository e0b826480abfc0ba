// Copyright 2026 The gruvd Authors
// SPDX-License-Identifier: Apache-2.0

#include "gruvd/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "gruvd/errors.hpp"

namespace gruvd {

namespace {

constexpr std::array<char, 4> kMagic{'G', 'V', 'T', 'D'};
constexpr std::uint32_t kMaxRank = 8;

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, std::streamoff offset, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw ParseError(std::string("GVTD: truncated ") + what + " at offset " +
                     std::to_string(offset));
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  for (T v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw IoError("GVTD: write failed");
}

template <typename T>
Tensor<T> read_tensor(std::istream& in) {
  const std::streamoff base = in.tellg();
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) {
    throw ParseError("GVTD: truncated magic at offset " + std::to_string(base));
  }
  if (magic != kMagic) throw ParseError("GVTD: bad magic at offset " + std::to_string(base));
  const auto rank = get_le<std::uint32_t>(in, base + 4, "rank");
  if (rank > kMaxRank) {
    throw ParseError("GVTD: rank " + std::to_string(rank) + " too large at offset " +
                     std::to_string(base + 4));
  }
  Shape shape(rank);
  std::uint64_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::streamoff off = base + 8 + 8 * static_cast<std::streamoff>(i);
    shape[i] = get_le<std::uint64_t>(in, off, "dimension");
    if (shape[i] != 0 && numel > (std::uint64_t{1} << 40) / shape[i]) {
      throw ParseError("GVTD: dimension overflow at offset " + std::to_string(off));
    }
    numel *= shape[i];
  }
  const std::streamoff data_off = base + 8 + 8 * static_cast<std::streamoff>(rank);
  std::vector<T> values(numel);
  for (std::uint64_t i = 0; i < numel; ++i) {
    const auto bits =
        get_le<std::uint32_t>(in, data_off + 4 * static_cast<std::streamoff>(i), "value");
    values[i] = static_cast<T>(std::bit_cast<float>(bits));
  }
  return Tensor<T>(std::move(shape), std::move(values));
}

template <typename T>
void save_tensors(const std::filesystem::path& path, const std::vector<Tensor<T>>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& t : tensors) write_tensor(out, t);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
std::vector<Tensor<T>> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Tensor<T>> tensors;
  while (in.peek() != std::char_traits<char>::eof()) tensors.push_back(read_tensor<T>(in));
  return tensors;
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);
template void save_tensors<float>(const std::filesystem::path&, const std::vector<Tensor<float>>&);
template void save_tensors<double>(const std::filesystem::path&,
                                   const std::vector<Tensor<double>>&);
template std::vector<Tensor<float>> load_tensors<float>(const std::filesystem::path&);
template std::vector<Tensor<double>> load_tensors<double>(const std::filesystem::path&);

}  // namespace gruvd
