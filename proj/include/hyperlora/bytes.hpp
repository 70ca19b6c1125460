#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hyperlora {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Base of every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs of the wrong length or shape.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Truncated or otherwise unparseable binary input.
class DecodeError : public Error {
 public:
  using Error::Error;
};

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

template <std::size_t N>
Bytes to_vector(const std::array<std::uint8_t, N>& a) {
  return Bytes(a.begin(), a.end());
}

Bytes concat(std::initializer_list<ByteView> parts);

std::string to_hex(ByteView data);
/// Accepts upper or lower case, ignores spaces. Throws DecodeError on odd length
/// or non-hex characters.
Bytes from_hex(std::string_view hex);

/// Little-endian append-only encoder.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void raw(ByteView data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  /// u16 length prefix, then bytes.
  void blob16(ByteView data);
  /// u32 length prefix, then bytes.
  void blob32(ByteView data);

  const Bytes& bytes() const& { return buf_; }
  Bytes take() && { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes buf_;
};

/// Little-endian cursor over a borrowed buffer. Every read is bounds-checked
/// and throws DecodeError on underrun.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  ByteView raw(std::size_t n);
  template <std::size_t N>
  std::array<std::uint8_t, N> array() {
    std::array<std::uint8_t, N> out{};
    auto v = raw(N);
    std::copy(v.begin(), v.end(), out.begin());
    return out;
  }
  Bytes blob16() { return copy(raw(u16())); }
  Bytes blob32() { return copy(raw(u32())); }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return remaining() == 0; }
  /// Throws DecodeError if unread bytes remain.
  void expect_done(const char* what) const;

 private:
  static Bytes copy(ByteView v) { return Bytes(v.begin(), v.end()); }
  std::uint64_t get_le(int width);

  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace hyperlora
