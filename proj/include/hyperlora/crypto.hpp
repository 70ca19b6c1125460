#pragma once

// Cryptographic primitives used by the ledgers and the LoRa frame codecs.
//
// Concrete algorithms (all from OpenSSL):
//   hash            SHA-256
//   sign / verify   Ed25519
//   pk_encrypt      X25519 ephemeral key agreement + HKDF-SHA256 + AES-128-GCM
//   mac32           AES-128-CMAC truncated to 4 bytes
//   block cipher    AES-128 (session-key derivation, payload keystream)
//
// All randomness is injected through an Rng so that simulations replay
// byte-identically.

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <string>

#include "hyperlora/bytes.hpp"

namespace hyperlora::crypto {

using Rng = std::mt19937_64;

class KeyError : public Error {
 public:
  using Error::Error;
};

class DecryptionError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kDigestSize = 32;
inline constexpr std::size_t kSignatureSize = 64;
inline constexpr std::size_t kPublicKeySize = 64;   // Ed25519 || X25519
inline constexpr std::size_t kPrivateKeySize = 64;  // Ed25519 seed || X25519 scalar

struct Digest {
  std::array<std::uint8_t, kDigestSize> bytes{};

  static Digest zero() { return {}; }
  static Digest from(ByteView data);
  ByteView view() const { return bytes; }
  std::string hex() const { return to_hex(bytes); }

  auto operator<=>(const Digest&) const = default;
};

struct SymmetricKey {
  std::array<std::uint8_t, 16> bytes{};

  /// Throws ArgumentError unless data is exactly 16 bytes.
  static SymmetricKey from(ByteView data);
  static SymmetricKey random(Rng& rng);
  ByteView view() const { return bytes; }

  auto operator<=>(const SymmetricKey&) const = default;
};

using Mic = std::array<std::uint8_t, 4>;

struct KeyPair {
  std::string entity_id;
  Bytes public_key;
  Bytes private_key;

  /// entity_id (u16 length-prefixed) || public key (u16 length-prefixed)
  /// || private key (u16 length-prefixed).
  Bytes serialize() const;
  static KeyPair deserialize(ByteView data);

  bool operator==(const KeyPair&) const = default;
};

/// Same (entity_id, seed) yields the same key material.
KeyPair generate_keypair(std::string entity_id, std::uint64_t seed);

Digest hash(ByteView data);

Bytes sign(ByteView private_key, ByteView message);
bool verify(ByteView public_key, ByteView message, ByteView signature);

/// Hybrid public-key envelope. The optional label travels in clear but is
/// authenticated; it lets holders of the ciphertext index it without being
/// able to read it. Throws ArgumentError on empty payload.
Bytes pk_encrypt(ByteView public_key, ByteView payload, Rng& rng, ByteView label = {});
/// Throws DecryptionError on a wrong key or any corruption of the envelope.
Bytes pk_decrypt(ByteView private_key, ByteView envelope);
/// Reads the clear label of an envelope without decrypting it.
Bytes envelope_label(ByteView envelope);

Mic mac32(const SymmetricKey& key, ByteView message);

std::array<std::uint8_t, 16> aes128_encrypt_block(const SymmetricKey& key,
                                                   const std::array<std::uint8_t, 16>& block);

struct SessionKeys {
  SymmetricKey nwk_s_key;
  SymmetricKey app_s_key;
};

/// NwkSKey = AES(AppKey, 0x01 | AppNonce | NetID | DevNonce | pad16)
/// AppSKey = AES(AppKey, 0x02 | AppNonce | NetID | DevNonce | pad16)
SessionKeys derive_session_keys(const SymmetricKey& app_key, ByteView app_nonce,
                                ByteView net_id, ByteView dev_nonce);

void fill_random(Rng& rng, std::span<std::uint8_t> out);

}  // namespace hyperlora::crypto
