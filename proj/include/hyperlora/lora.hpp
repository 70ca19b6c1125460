#pragma once

// LoRaWAN-1.0-style wire frames (no FCtrl/FOpts). Layouts, all integers
// little-endian:
//
//   JoinRequest  0x00 | AppEUI(8) | DevEUI(8) | DevNonce(2) | MIC(4)        23 B
//   JoinAccept   0x20 | AppNonce(3) | NetID(3) | DevAddr(4) | MIC(4)        15 B
//                (bytes 1..14 are XOR-sealed under AppKey on the air)
//   DataUp       0x40 | DevAddr(4) | FCnt(2) | FPort(1) | FRMPayload | MIC(4)
//   DataDown     0x60 | ...same as DataUp
//
// MICs are AES-CMAC truncated to 4 bytes: AppKey over the preceding bytes for
// join frames, NwkSKey over the preceding bytes plus a direction byte
// (0x00 up, 0x01 down) for data frames.

#include <optional>
#include <string>
#include <variant>

#include "hyperlora/crypto.hpp"
#include "hyperlora/ids.hpp"
#include "hyperlora/ledger.hpp"

namespace hyperlora::lora {

using crypto::Mic;
using crypto::SymmetricKey;

class MalformedFrame : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

inline constexpr std::uint8_t kMhdrJoinRequest = 0x00;
inline constexpr std::uint8_t kMhdrJoinAccept = 0x20;
inline constexpr std::uint8_t kMhdrDataUp = 0x40;
inline constexpr std::uint8_t kMhdrDataDown = 0x60;

inline constexpr std::size_t kJoinRequestSize = 23;
inline constexpr std::size_t kJoinAcceptSize = 15;
inline constexpr std::size_t kDataOverhead = 12;
inline constexpr std::size_t kMaxPayload = 242;

enum class Direction : std::uint8_t { up = 0x00, down = 0x01 };

struct JoinRequestFrame {
  AppEui app_eui{};
  DevEui dev_eui{};
  DevNonce dev_nonce{};
  Mic mic{};
  bool operator==(const JoinRequestFrame&) const = default;
};

/// Fields as seen after unsealing.
struct JoinAcceptFrame {
  AppNonce app_nonce{};
  NetId net_id{};
  DevAddr dev_addr{};
  Mic mic{};
  bool operator==(const JoinAcceptFrame&) const = default;
};

struct DataFrame {
  Direction direction = Direction::up;
  DevAddr dev_addr{};
  std::uint16_t fcnt = 0;
  std::uint8_t fport = 1;
  Bytes frm_payload;
  Mic mic{};
  bool operator==(const DataFrame&) const = default;
};

using Frame = std::variant<JoinRequestFrame, JoinAcceptFrame, DataFrame>;

Bytes serialize_frame(const Frame& frame);
/// Throws MalformedFrame on unknown MHDR, wrong length, or oversize payload.
Frame parse_frame(ByteView bytes);

/// The three parts a network connector works with.
struct DataFrameParts {
  ByteView meta;     // MHDR .. FPort
  ByteView payload;  // encrypted FRMPayload
  ByteView mic;
};
/// Throws MalformedFrame.
DataFrameParts split_data_frame(ByteView bytes);

Mic compute_mic(const JoinRequestFrame& f, const SymmetricKey& app_key);
Mic compute_mic(const JoinAcceptFrame& f, const SymmetricKey& app_key);
Mic compute_mic(const DataFrame& f, const SymmetricKey& nwk_s_key);

template <class F>
bool verify_mic(const F& f, const SymmetricKey& key) {
  return compute_mic(f, key) == f.mic;
}

template <class F>
F with_mic(F f, const SymmetricKey& key) {
  f.mic = compute_mic(f, key);
  return f;
}

/// Application payload as produced by a device (AppSKey ciphertext). Network
/// elements only ever handle this type.
struct AppCiphertext {
  Bytes bytes;
  bool operator==(const AppCiphertext&) const = default;
};

/// Decrypted application payload; only devices and the application side hold it.
struct AppPlaintext {
  Bytes bytes;
  bool operator==(const AppPlaintext&) const = default;
};

/// AES-128 counter-mode keystream over blocks
/// 0x01 | 0^4 | dir | DevAddr | FCnt(u32) | 0x00 | i.
AppCiphertext encrypt_payload(const SymmetricKey& app_s_key, const DevAddr& dev_addr,
                              std::uint16_t fcnt, Direction dir, const AppPlaintext& plain);
AppPlaintext decrypt_payload(const SymmetricKey& app_s_key, const DevAddr& dev_addr,
                             std::uint16_t fcnt, Direction dir, const AppCiphertext& cipher);

/// Join accept for a freshly generated context, MIC computed under app_key.
JoinAcceptFrame build_join_accept(const ledger::SessionContext& context,
                                  const SymmetricKey& app_key, const NetId& net_id);

/// XOR-seals bytes 1..14 of a serialized join accept with a keystream keyed
/// by AppKey and the DevNonce of the request it answers. Self-inverse.
Bytes seal_join_accept(ByteView serialized, const SymmetricKey& app_key, const DevNonce& dev_nonce);

/// Device side: unseal, parse and MIC-check. nullopt on any failure.
std::optional<JoinAcceptFrame> open_join_accept(ByteView wire, const SymmetricKey& app_key,
                                                const DevNonce& dev_nonce);

/// Multi-line labeled field breakdown of a frame; throws MalformedFrame.
std::string describe_frame(ByteView bytes);

}  // namespace hyperlora::lora
