#include "hyperlora/lora.hpp"

#include <sstream>

namespace hyperlora::lora {

namespace {

void write_fields(ByteWriter& w, const JoinRequestFrame& f) {
  w.u8(kMhdrJoinRequest);
  w.raw(f.app_eui);
  w.raw(f.dev_eui);
  w.raw(f.dev_nonce);
}

void write_fields(ByteWriter& w, const JoinAcceptFrame& f) {
  w.u8(kMhdrJoinAccept);
  w.raw(f.app_nonce);
  w.raw(f.net_id);
  w.raw(f.dev_addr);
}

void write_fields(ByteWriter& w, const DataFrame& f) {
  if (f.frm_payload.size() > kMaxPayload) throw MalformedFrame("FRMPayload exceeds 242 bytes");
  w.u8(f.direction == Direction::up ? kMhdrDataUp : kMhdrDataDown);
  w.raw(f.dev_addr);
  w.u16(f.fcnt);
  w.u8(f.fport);
  w.raw(f.frm_payload);
}

template <class F>
Bytes mic_input(const F& f) {
  ByteWriter w;
  write_fields(w, f);
  return std::move(w).take();
}

}  // namespace

Bytes serialize_frame(const Frame& frame) {
  return std::visit(
      [](const auto& f) {
        ByteWriter w;
        write_fields(w, f);
        w.raw(f.mic);
        return std::move(w).take();
      },
      frame);
}

Frame parse_frame(ByteView bytes) {
  if (bytes.empty()) throw MalformedFrame("empty frame");
  ByteReader r(bytes);
  std::uint8_t mhdr = r.u8();
  switch (mhdr) {
    case kMhdrJoinRequest: {
      if (bytes.size() != kJoinRequestSize) throw MalformedFrame("join request must be 23 bytes");
      JoinRequestFrame f;
      f.app_eui = r.array<8>();
      f.dev_eui = r.array<8>();
      f.dev_nonce = r.array<2>();
      f.mic = r.array<4>();
      return f;
    }
    case kMhdrJoinAccept: {
      if (bytes.size() != kJoinAcceptSize) throw MalformedFrame("join accept must be 15 bytes");
      JoinAcceptFrame f;
      f.app_nonce = r.array<3>();
      f.net_id = r.array<3>();
      f.dev_addr = r.array<4>();
      f.mic = r.array<4>();
      return f;
    }
    case kMhdrDataUp:
    case kMhdrDataDown: {
      if (bytes.size() < kDataOverhead) throw MalformedFrame("data frame shorter than 12 bytes");
      if (bytes.size() > kDataOverhead + kMaxPayload) throw MalformedFrame("FRMPayload exceeds 242 bytes");
      DataFrame f;
      f.direction = mhdr == kMhdrDataUp ? Direction::up : Direction::down;
      f.dev_addr = r.array<4>();
      f.fcnt = r.u16();
      f.fport = r.u8();
      auto payload = r.raw(bytes.size() - kDataOverhead);
      f.frm_payload.assign(payload.begin(), payload.end());
      f.mic = r.array<4>();
      return f;
    }
    default:
      throw MalformedFrame("unknown MHDR 0x" + to_hex(bytes.first(1)));
  }
}

DataFrameParts split_data_frame(ByteView bytes) {
  if (bytes.empty() || (bytes[0] != kMhdrDataUp && bytes[0] != kMhdrDataDown))
    throw MalformedFrame("not a data frame");
  if (bytes.size() < kDataOverhead || bytes.size() > kDataOverhead + kMaxPayload)
    throw MalformedFrame("data frame length out of range");
  return {bytes.first(8), bytes.subspan(8, bytes.size() - kDataOverhead), bytes.last(4)};
}

Mic compute_mic(const JoinRequestFrame& f, const SymmetricKey& app_key) {
  return crypto::mac32(app_key, mic_input(f));
}

Mic compute_mic(const JoinAcceptFrame& f, const SymmetricKey& app_key) {
  return crypto::mac32(app_key, mic_input(f));
}

Mic compute_mic(const DataFrame& f, const SymmetricKey& nwk_s_key) {
  auto input = mic_input(f);
  input.push_back(static_cast<std::uint8_t>(f.direction));
  return crypto::mac32(nwk_s_key, input);
}

namespace {

Bytes keystream_xor(const SymmetricKey& key, const DevAddr& dev_addr, std::uint16_t fcnt,
                    Direction dir, ByteView in) {
  Bytes out(in.begin(), in.end());
  for (std::size_t block = 0; block * 16 < out.size(); ++block) {
    std::array<std::uint8_t, 16> a{};
    a[0] = 0x01;
    a[5] = static_cast<std::uint8_t>(dir);
    std::copy(dev_addr.begin(), dev_addr.end(), a.begin() + 6);
    a[10] = static_cast<std::uint8_t>(fcnt);
    a[11] = static_cast<std::uint8_t>(fcnt >> 8);
    a[15] = static_cast<std::uint8_t>(block + 1);
    auto s = crypto::aes128_encrypt_block(key, a);
    for (std::size_t i = 0; i < 16 && block * 16 + i < out.size(); ++i) out[block * 16 + i] ^= s[i];
  }
  return out;
}

}  // namespace

AppCiphertext encrypt_payload(const SymmetricKey& app_s_key, const DevAddr& dev_addr,
                              std::uint16_t fcnt, Direction dir, const AppPlaintext& plain) {
  return {keystream_xor(app_s_key, dev_addr, fcnt, dir, plain.bytes)};
}

AppPlaintext decrypt_payload(const SymmetricKey& app_s_key, const DevAddr& dev_addr,
                             std::uint16_t fcnt, Direction dir, const AppCiphertext& cipher) {
  return {keystream_xor(app_s_key, dev_addr, fcnt, dir, cipher.bytes)};
}

JoinAcceptFrame build_join_accept(const ledger::SessionContext& context,
                                  const SymmetricKey& app_key, const NetId& net_id) {
  JoinAcceptFrame f;
  f.app_nonce = context.app_nonce;
  f.net_id = net_id;
  f.dev_addr = context.dev_addr;
  return with_mic(f, app_key);
}

Bytes seal_join_accept(ByteView serialized, const SymmetricKey& app_key, const DevNonce& dev_nonce) {
  if (serialized.size() != kJoinAcceptSize) throw MalformedFrame("join accept must be 15 bytes");
  std::array<std::uint8_t, 16> a{};
  a[0] = 0x03;
  a[1] = dev_nonce[0];
  a[2] = dev_nonce[1];
  auto s = crypto::aes128_encrypt_block(app_key, a);
  Bytes out(serialized.begin(), serialized.end());
  for (std::size_t i = 1; i < out.size(); ++i) out[i] ^= s[i - 1];
  return out;
}

std::optional<JoinAcceptFrame> open_join_accept(ByteView wire, const SymmetricKey& app_key,
                                                const DevNonce& dev_nonce) {
  if (wire.size() != kJoinAcceptSize || wire[0] != kMhdrJoinAccept) return std::nullopt;
  auto plain = seal_join_accept(wire, app_key, dev_nonce);
  auto frame = std::get<JoinAcceptFrame>(parse_frame(plain));
  if (!verify_mic(frame, app_key)) return std::nullopt;
  return frame;
}

std::string describe_frame(ByteView bytes) {
  auto frame = parse_frame(bytes);
  std::ostringstream os;
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, JoinRequestFrame>) {
          os << "type      JoinRequest\n"
             << "mhdr      0x00\n"
             << "app_eui   " << to_hex(f.app_eui) << "\n"
             << "dev_eui   " << to_hex(f.dev_eui) << "\n"
             << "dev_nonce " << to_hex(f.dev_nonce) << "\n";
        } else if constexpr (std::is_same_v<F, JoinAcceptFrame>) {
          os << "type      JoinAccept (fields shown as carried; sealed on air)\n"
             << "mhdr      0x20\n"
             << "app_nonce " << to_hex(f.app_nonce) << "\n"
             << "net_id    " << to_hex(f.net_id) << "\n"
             << "dev_addr  " << to_hex(f.dev_addr) << "\n";
        } else {
          os << "type      " << (f.direction == Direction::up ? "DataUp" : "DataDown") << "\n"
             << "mhdr      0x" << (f.direction == Direction::up ? "40" : "60") << "\n"
             << "dev_addr  " << to_hex(f.dev_addr) << "\n"
             << "fcnt      " << f.fcnt << "\n"
             << "fport     " << static_cast<int>(f.fport) << "\n"
             << "payload   " << (f.frm_payload.empty() ? "(empty)" : to_hex(f.frm_payload))
             << " [" << f.frm_payload.size() << " bytes, encrypted]\n";
        }
        os << "mic       " << to_hex(f.mic) << "\n"
           << "length    " << bytes.size() << " bytes\n";
      },
      frame);
  return os.str();
}

}  // namespace hyperlora::lora
