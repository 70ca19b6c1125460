#include "hyperlora/bytes.hpp"

#include <limits>

namespace hyperlora {

Bytes concat(std::initializer_list<ByteView> parts) {
  std::size_t total = 0;
  for (auto p : parts) total += p.size();
  Bytes out;
  out.reserve(total);
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

namespace {
int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  std::string digits;
  for (char c : hex) {
    if (c == ' ' || c == '\t' || c == '\n') continue;
    digits.push_back(c);
  }
  if (digits.size() % 2 != 0) throw DecodeError("hex string has odd length");
  Bytes out;
  out.reserve(digits.size() / 2);
  for (std::size_t i = 0; i < digits.size(); i += 2) {
    int hi = nibble(digits[i]);
    int lo = nibble(digits[i + 1]);
    if (hi < 0 || lo < 0) throw DecodeError("invalid hex character");
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

void ByteWriter::blob16(ByteView data) {
  if (data.size() > std::numeric_limits<std::uint16_t>::max())
    throw ArgumentError("blob16 field longer than 65535 bytes");
  u16(static_cast<std::uint16_t>(data.size()));
  raw(data);
}

void ByteWriter::blob32(ByteView data) {
  if (data.size() > std::numeric_limits<std::uint32_t>::max())
    throw ArgumentError("blob32 field too long");
  u32(static_cast<std::uint32_t>(data.size()));
  raw(data);
}

ByteView ByteReader::raw(std::size_t n) {
  if (n > remaining()) throw DecodeError("unexpected end of input");
  auto v = data_.subspan(pos_, n);
  pos_ += n;
  return v;
}

void ByteReader::expect_done(const char* what) const {
  if (!done()) throw DecodeError(std::string("trailing bytes after ") + what);
}

std::uint64_t ByteReader::get_le(int width) {
  auto v = raw(static_cast<std::size_t>(width));
  std::uint64_t out = 0;
  for (int i = 0; i < width; ++i) out |= static_cast<std::uint64_t>(v[i]) << (8 * i);
  return out;
}

}  // namespace hyperlora
