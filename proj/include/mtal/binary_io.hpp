#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "mtal/common.hpp"

namespace mtal::io {

template <typename T>
concept Wire = std::is_arithmetic_v<T>;

template <Wire T>
std::array<std::byte, sizeof(T)> to_le(T value) {
  std::array<std::byte, sizeof(T)> raw;
  std::memcpy(raw.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(raw.begin(), raw.end());
  }
  return raw;
}

template <Wire T>
T from_le(const std::byte* raw) {
  std::array<std::byte, sizeof(T)> tmp;
  std::memcpy(tmp.data(), raw, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(tmp.begin(), tmp.end());
  }
  T value;
  std::memcpy(&value, tmp.data(), sizeof(T));
  return value;
}

template <Wire T>
void write(std::ostream& out, T value) {
  const auto raw = to_le(value);
  out.write(reinterpret_cast<const char*>(raw.data()), sizeof(T));
}

template <Wire T>
T read(std::istream& in, const char* what) {
  std::array<std::byte, sizeof(T)> raw;
  if (!in.read(reinterpret_cast<char*>(raw.data()), sizeof(T))) {
    throw Error(std::string("truncated input while reading ") + what);
  }
  return from_le<T>(raw.data());
}

inline void write_magic(std::ostream& out, const char (&magic)[9]) {
  out.write(magic, 8);
}

inline void expect_magic(std::istream& in, const char (&magic)[9], const char* what) {
  char got[8];
  if (!in.read(got, 8) || std::memcmp(got, magic, 8) != 0) {
    throw Error(std::string("bad magic: not a ") + what + " file");
  }
}

/// Appends little-endian values to a byte buffer.
class ByteWriter {
 public:
  template <Wire T>
  void put(T value) {
    const auto raw = to_le(value);
    bytes_.insert(bytes_.end(), raw.begin(), raw.end());
  }
  void put_bytes(std::span<const std::byte> raw) { bytes_.insert(bytes_.end(), raw.begin(), raw.end()); }
  void reserve(std::size_t n) { bytes_.reserve(n); }
  std::size_t size() const { return bytes_.size(); }
  std::vector<std::byte>& bytes() { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

/// Bounds-checked little-endian reader over a byte span.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  template <Wire T>
  T get(const char* what) {
    require(sizeof(T), what);
    T v = from_le<T>(bytes_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::byte> take(std::size_t n, const char* what) {
    require(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void require(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw Error(std::string("truncated buffer while reading ") + what);
  }
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace mtal::io
