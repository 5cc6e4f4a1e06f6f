#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ifnet/autodiff/tensor.hpp"
#include "ifnet/core/binary_io.hpp"

namespace ifnet {

inline constexpr std::uint32_t kTensorFormatVersion = 1;

/// u32 rank, u64 dims, f64 values.
template <class T>
void put_tensor(BinaryWriter& w, const Tensor<T>& t) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.put<std::uint64_t>(d);
  std::vector<double> v(t.values().begin(), t.values().end());
  w.put_array<double>(v);
}

template <class T>
Tensor<T> get_tensor(BinaryReader& r) {
  const auto rank = r.get<std::uint32_t>("tensor rank");
  if (rank == 0 || rank > 8) r.fail("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const auto dim = r.get<std::uint64_t>("tensor dimension");
    if (dim == 0) r.fail("zero tensor dimension");
    count *= dim;
    if (count > r.remaining() / sizeof(double) + 1) r.fail("tensor larger than the remaining file");
    d = static_cast<std::size_t>(dim);
  }
  std::vector<double> v(count);
  r.get_array<double>(v, "tensor values");
  return Tensor<T>(std::move(shape), std::vector<T>(v.begin(), v.end()));
}

template <class T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  BinaryWriter w;
  w.magic("IFTN");
  w.put<std::uint32_t>(kTensorFormatVersion);
  put_tensor(w, t);
  w.write_file(path);
}

template <class T = double>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  r.expect_magic("IFTN");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kTensorFormatVersion)
    r.fail("unsupported tensor version " + std::to_string(version) + " (expected " + std::to_string(kTensorFormatVersion) + ")");
  auto t = get_tensor<T>(r);
  if (!r.at_end()) r.fail("trailing bytes after tensor");
  return t;
}

}  // namespace ifnet
