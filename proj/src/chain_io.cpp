#include <cstring>
#include <fstream>
#include <iterator>

#include "hyperlora/ledger.hpp"

namespace hyperlora::ledger {

namespace {
constexpr char kMagic[4] = {'H', 'L', 'R', 'A'};

LedgerKind parse_kind(std::uint8_t v) {
  if (v == static_cast<std::uint8_t>(LedgerKind::network)) return LedgerKind::network;
  if (v == static_cast<std::uint8_t>(LedgerKind::application)) return LedgerKind::application;
  throw DecodeError("unknown ledger kind");
}

void check_magic(ByteReader& r) {
  auto magic = r.raw(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw DecodeError("not a chain dump (bad magic)");
  if (r.u16() != kChainFormatVersion) throw DecodeError("unsupported chain format version");
}
}  // namespace

Bytes encode_chain(const Ledger& ledger) {
  ByteWriter w;
  w.raw(as_bytes(std::string_view(kMagic, 4)));
  w.u16(kChainFormatVersion);
  w.u8(static_cast<std::uint8_t>(ledger.kind()));
  for (const auto& b : ledger.blocks()) w.blob32(b.serialize());
  return std::move(w).take();
}

LedgerKind peek_chain_kind(ByteView data) {
  ByteReader r(data);
  check_magic(r);
  return parse_kind(r.u8());
}

Ledger decode_chain(ByteView data, const KeyDirectory& directory) {
  ByteReader r(data);
  check_magic(r);
  Ledger ledger(parse_kind(r.u8()));
  while (!r.done()) {
    auto block = Block::deserialize(r.blob32());
    auto zeta = block.zeta;
    auto result = ledger.append(std::move(block), directory);
    if (result != BlockCheck::ok)
      throw ChainError("block " + std::to_string(zeta) + ": " + to_string(result));
  }
  return ledger;
}

void dump_chain(const Ledger& ledger, const std::string& path) {
  auto bytes = encode_chain(ledger);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

Ledger load_chain(const std::string& path, const KeyDirectory& directory) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_chain(bytes, directory);
}

namespace {
constexpr char kKeysMagic[4] = {'H', 'L', 'R', 'K'};
constexpr std::uint16_t kKeysVersion = 1;
}  // namespace

Bytes encode_directory(const KeyDirectory& directory) {
  ByteWriter w;
  w.raw(as_bytes(std::string_view(kKeysMagic, 4)));
  w.u16(kKeysVersion);
  w.u32(static_cast<std::uint32_t>(directory.entries().size()));
  for (const auto& [id, e] : directory.entries()) {
    w.blob16(as_bytes(id));
    w.u8(static_cast<std::uint8_t>(e.role));
    w.blob16(e.public_key);
  }
  return std::move(w).take();
}

KeyDirectory decode_directory(ByteView data) {
  ByteReader r(data);
  auto magic = r.raw(4);
  if (std::memcmp(magic.data(), kKeysMagic, 4) != 0) throw DecodeError("not a key file (bad magic)");
  if (r.u16() != kKeysVersion) throw DecodeError("unsupported key file version");
  KeyDirectory dir;
  auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto id = r.blob16();
    auto role = r.u8();
    if (role > static_cast<std::uint8_t>(Role::orderer)) throw DecodeError("unknown role");
    dir.add(EntityId(id.begin(), id.end()), r.blob16(), static_cast<Role>(role));
  }
  r.expect_done("key file");
  return dir;
}

}  // namespace hyperlora::ledger
