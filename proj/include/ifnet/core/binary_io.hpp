#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "ifnet/core/error.hpp"

namespace ifnet {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Appends little-endian fields to a byte buffer.
class BinaryWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void put_array(std::span<const T> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }

  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  void write_file(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw Error("write failed: " + path.string());
  }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Reads little-endian fields from an in-memory buffer; every failure reports its byte offset.
class BinaryReader {
 public:
  explicit BinaryReader(std::vector<std::uint8_t> bytes, std::string source = "buffer")
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  static BinaryReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return BinaryReader(std::move(bytes), path.string());
  }

  void expect_magic(std::string_view tag) {
    need(tag.size(), "magic");
    if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0)
      throw FormatError(source_ + ": bad magic, expected \"" + std::string(tag) + "\"", pos_);
    pos_ += tag.size();
  }

  bool peek_magic(std::string_view tag) const {
    return remaining() >= tag.size() && std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) == 0;
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  T get(const char* what = "field") {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void get_array(std::span<T> out, const char* what = "array") {
    need(out.size_bytes(), what);
    std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::string get_string(const char* what = "string") {
    const auto n = get<std::uint32_t>(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(source_ + ": " + what, pos_); }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw FormatError(source_ + ": truncated while reading " + what + " (need " + std::to_string(n) +
                            " bytes, " + std::to_string(remaining()) + " left)",
                        pos_);
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace ifnet
