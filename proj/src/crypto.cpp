#include "hyperlora/crypto.hpp"

#include <openssl/core_names.h>
#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/params.h>

#include <cstring>
#include <memory>

namespace hyperlora::crypto {

namespace {

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
struct PkeyCtxDeleter {
  void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};
struct MacCtxDeleter {
  void operator()(EVP_MAC_CTX* p) const { EVP_MAC_CTX_free(p); }
};
struct KdfCtxDeleter {
  void operator()(EVP_KDF_CTX* p) const { EVP_KDF_CTX_free(p); }
};

using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;
using MacCtxPtr = std::unique_ptr<EVP_MAC_CTX, MacCtxDeleter>;
using KdfCtxPtr = std::unique_ptr<EVP_KDF_CTX, KdfCtxDeleter>;

constexpr std::size_t kHalf = 32;
constexpr std::uint8_t kEnvelopeVersion = 1;
constexpr std::size_t kGcmNonce = 12;
constexpr std::size_t kGcmTag = 16;

[[noreturn]] void fail(const char* what) { throw Error(std::string("openssl: ") + what); }

PkeyPtr private_pkey(int type, ByteView raw) {
  PkeyPtr key(EVP_PKEY_new_raw_private_key(type, nullptr, raw.data(), raw.size()));
  if (!key) throw KeyError("malformed private key");
  return key;
}

PkeyPtr public_pkey(int type, ByteView raw) {
  PkeyPtr key(EVP_PKEY_new_raw_public_key(type, nullptr, raw.data(), raw.size()));
  if (!key) throw KeyError("malformed public key");
  return key;
}

std::array<std::uint8_t, kHalf> raw_public(EVP_PKEY* key) {
  std::array<std::uint8_t, kHalf> out{};
  std::size_t len = out.size();
  if (EVP_PKEY_get_raw_public_key(key, out.data(), &len) != 1 || len != kHalf)
    fail("EVP_PKEY_get_raw_public_key");
  return out;
}

void check_private(ByteView private_key) {
  if (private_key.size() != kPrivateKeySize) throw KeyError("private key must be 64 bytes");
}

void check_public(ByteView public_key) {
  if (public_key.size() != kPublicKeySize) throw KeyError("public key must be 64 bytes");
}

std::array<std::uint8_t, kHalf> x25519(ByteView private_scalar, ByteView peer_public) {
  auto priv = private_pkey(EVP_PKEY_X25519, private_scalar);
  auto peer = public_pkey(EVP_PKEY_X25519, peer_public);
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new(priv.get(), nullptr));
  if (!ctx || EVP_PKEY_derive_init(ctx.get()) != 1) fail("derive init");
  if (EVP_PKEY_derive_set_peer(ctx.get(), peer.get()) != 1) throw DecryptionError("bad peer key");
  std::array<std::uint8_t, kHalf> out{};
  std::size_t len = out.size();
  if (EVP_PKEY_derive(ctx.get(), out.data(), &len) != 1 || len != kHalf)
    throw DecryptionError("key agreement failed");
  return out;
}

std::array<std::uint8_t, 16> hkdf16(ByteView ikm, ByteView salt) {
  static EVP_KDF* kdf = EVP_KDF_fetch(nullptr, "HKDF", nullptr);
  if (!kdf) fail("HKDF unavailable");
  KdfCtxPtr ctx(EVP_KDF_CTX_new(kdf));
  static const char kInfo[] = "hyperlora-envelope-v1";
  char digest[] = "SHA256";
  OSSL_PARAM params[] = {
      OSSL_PARAM_construct_utf8_string(OSSL_KDF_PARAM_DIGEST, digest, 0),
      OSSL_PARAM_construct_octet_string(OSSL_KDF_PARAM_KEY, const_cast<std::uint8_t*>(ikm.data()),
                                        ikm.size()),
      OSSL_PARAM_construct_octet_string(OSSL_KDF_PARAM_SALT,
                                        const_cast<std::uint8_t*>(salt.data()), salt.size()),
      OSSL_PARAM_construct_octet_string(OSSL_KDF_PARAM_INFO, const_cast<char*>(kInfo),
                                        sizeof(kInfo) - 1),
      OSSL_PARAM_construct_end()};
  std::array<std::uint8_t, 16> out{};
  if (!ctx || EVP_KDF_derive(ctx.get(), out.data(), out.size(), params) != 1) fail("HKDF");
  return out;
}

Bytes envelope_aad(ByteView label) {
  ByteWriter w;
  w.u8(kEnvelopeVersion);
  w.blob16(label);
  return std::move(w).take();
}

}  // namespace

Digest Digest::from(ByteView data) {
  if (data.size() != kDigestSize) throw ArgumentError("digest must be 32 bytes");
  Digest d;
  std::memcpy(d.bytes.data(), data.data(), kDigestSize);
  return d;
}

SymmetricKey SymmetricKey::from(ByteView data) {
  if (data.size() != 16) throw ArgumentError("symmetric key must be 16 bytes");
  SymmetricKey k;
  std::memcpy(k.bytes.data(), data.data(), 16);
  return k;
}

SymmetricKey SymmetricKey::random(Rng& rng) {
  SymmetricKey k;
  fill_random(rng, k.bytes);
  return k;
}

void fill_random(Rng& rng, std::span<std::uint8_t> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    std::uint64_t word = rng();
    for (int b = 0; b < 8 && i < out.size(); ++b, ++i) out[i] = static_cast<std::uint8_t>(word >> (8 * b));
  }
}

Bytes KeyPair::serialize() const {
  ByteWriter w;
  w.blob16(as_bytes(entity_id));
  w.blob16(public_key);
  w.blob16(private_key);
  return std::move(w).take();
}

KeyPair KeyPair::deserialize(ByteView data) {
  ByteReader r(data);
  KeyPair kp;
  auto id = r.blob16();
  kp.entity_id.assign(id.begin(), id.end());
  kp.public_key = r.blob16();
  kp.private_key = r.blob16();
  r.expect_done("key pair");
  return kp;
}

KeyPair generate_keypair(std::string entity_id, std::uint64_t seed) {
  ByteWriter w;
  w.raw(as_bytes("hyperlora-keygen"));
  w.u64(seed);
  w.blob16(as_bytes(entity_id));
  auto base = w.bytes();
  base.push_back('S');
  auto sign_seed = hash(base);
  base.back() = 'X';
  auto dh_scalar = hash(base);

  auto ed = private_pkey(EVP_PKEY_ED25519, sign_seed.view());
  auto x = private_pkey(EVP_PKEY_X25519, dh_scalar.view());
  auto ed_pub = raw_public(ed.get());
  auto x_pub = raw_public(x.get());

  KeyPair kp;
  kp.entity_id = std::move(entity_id);
  kp.public_key = concat({ed_pub, x_pub});
  kp.private_key = concat({sign_seed.view(), dh_scalar.view()});
  return kp;
}

Digest hash(ByteView data) {
  Digest d;
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != kDigestSize)
    fail("SHA-256");
  return d;
}

Bytes sign(ByteView private_key, ByteView message) {
  check_private(private_key);
  auto key = private_pkey(EVP_PKEY_ED25519, private_key.first(kHalf));
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1)
    fail("sign init");
  Bytes sig(kSignatureSize);
  std::size_t len = sig.size();
  if (EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()) != 1)
    fail("sign");
  sig.resize(len);
  return sig;
}

bool verify(ByteView public_key, ByteView message, ByteView signature) {
  check_public(public_key);
  if (signature.size() != kSignatureSize) return false;
  auto key = public_pkey(EVP_PKEY_ED25519, public_key.first(kHalf));
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1)
    fail("verify init");
  return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), message.data(),
                          message.size()) == 1;
}

// Envelope layout:
//   version u8 | label (u16 len + bytes) | ephemeral X25519 public (32)
//   | GCM nonce (12) | ciphertext | GCM tag (16)
// AAD = version | label.
Bytes pk_encrypt(ByteView public_key, ByteView payload, Rng& rng, ByteView label) {
  check_public(public_key);
  if (payload.empty()) throw ArgumentError("pk_encrypt: empty payload");
  auto recipient = public_key.subspan(kHalf, kHalf);

  std::array<std::uint8_t, kHalf> eph_scalar{};
  fill_random(rng, eph_scalar);
  auto eph = private_pkey(EVP_PKEY_X25519, eph_scalar);
  auto eph_pub = raw_public(eph.get());
  auto shared = x25519(eph_scalar, recipient);
  auto key = hkdf16(shared, concat({eph_pub, recipient}));

  std::array<std::uint8_t, kGcmNonce> nonce{};
  fill_random(rng, nonce);
  auto aad = envelope_aad(label);

  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  int len = 0;
  Bytes ct(payload.size());
  std::array<std::uint8_t, kGcmTag> tag{};
  if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.data(), nonce.data()) != 1 ||
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1 ||
      EVP_EncryptUpdate(ctx.get(), ct.data(), &len, payload.data(), static_cast<int>(payload.size())) != 1 ||
      EVP_EncryptFinal_ex(ctx.get(), ct.data() + len, &len) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kGcmTag, tag.data()) != 1)
    fail("AES-GCM encrypt");

  return concat({aad, eph_pub, nonce, ct, tag});
}

Bytes envelope_label(ByteView envelope) {
  ByteReader r(envelope);
  if (r.u8() != kEnvelopeVersion) throw DecryptionError("unknown envelope version");
  return r.blob16();
}

Bytes pk_decrypt(ByteView private_key, ByteView envelope) {
  check_private(private_key);
  Bytes label;
  ByteView eph_pub, nonce, body;
  try {
    ByteReader r(envelope);
    if (r.u8() != kEnvelopeVersion) throw DecryptionError("unknown envelope version");
    label = r.blob16();
    eph_pub = r.raw(kHalf);
    nonce = r.raw(kGcmNonce);
    if (r.remaining() <= kGcmTag) throw DecryptionError("envelope too short");
    body = r.raw(r.remaining());
  } catch (const DecodeError&) {
    throw DecryptionError("truncated envelope");
  }
  auto ct = body.first(body.size() - kGcmTag);
  auto tag = body.last(kGcmTag);

  auto scalar = private_key.subspan(kHalf, kHalf);
  auto own = private_pkey(EVP_PKEY_X25519, scalar);
  auto own_pub = raw_public(own.get());
  auto shared = x25519(scalar, eph_pub);
  auto key = hkdf16(shared, concat({eph_pub, own_pub}));
  auto aad = envelope_aad(label);

  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  int len = 0;
  Bytes out(ct.size());
  std::array<std::uint8_t, kGcmTag> tag_copy{};
  std::memcpy(tag_copy.data(), tag.data(), kGcmTag);
  if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, key.data(), nonce.data()) != 1 ||
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1 ||
      EVP_DecryptUpdate(ctx.get(), out.data(), &len, ct.data(), static_cast<int>(ct.size())) != 1 ||
      EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kGcmTag, tag_copy.data()) != 1)
    fail("AES-GCM decrypt");
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + len, &len) != 1)
    throw DecryptionError("envelope authentication failed");
  return out;
}

Mic mac32(const SymmetricKey& key, ByteView message) {
  static EVP_MAC* mac = EVP_MAC_fetch(nullptr, "CMAC", nullptr);
  if (!mac) fail("CMAC unavailable");
  MacCtxPtr ctx(EVP_MAC_CTX_new(mac));
  char cipher[] = "AES-128-CBC";
  OSSL_PARAM params[] = {OSSL_PARAM_construct_utf8_string(OSSL_MAC_PARAM_CIPHER, cipher, 0),
                         OSSL_PARAM_construct_end()};
  std::array<std::uint8_t, 16> full{};
  std::size_t len = 0;
  if (!ctx || EVP_MAC_init(ctx.get(), key.bytes.data(), key.bytes.size(), params) != 1 ||
      EVP_MAC_update(ctx.get(), message.data(), message.size()) != 1 ||
      EVP_MAC_final(ctx.get(), full.data(), &len, full.size()) != 1 || len != 16)
    fail("CMAC");
  return {full[0], full[1], full[2], full[3]};
}

std::array<std::uint8_t, 16> aes128_encrypt_block(const SymmetricKey& key,
                                                   const std::array<std::uint8_t, 16>& block) {
  CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
  std::array<std::uint8_t, 16> out{};
  int len = 0;
  if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_ecb(), nullptr, key.bytes.data(), nullptr) != 1 ||
      EVP_CIPHER_CTX_set_padding(ctx.get(), 0) != 1 ||
      EVP_EncryptUpdate(ctx.get(), out.data(), &len, block.data(), 16) != 1 || len != 16)
    fail("AES-128 block");
  return out;
}

SessionKeys derive_session_keys(const SymmetricKey& app_key, ByteView app_nonce,
                                ByteView net_id, ByteView dev_nonce) {
  if (app_nonce.size() != 3) throw ArgumentError("AppNonce must be 3 bytes");
  if (net_id.size() != 3) throw ArgumentError("NetID must be 3 bytes");
  if (dev_nonce.size() != 2) throw ArgumentError("DevNonce must be 2 bytes");
  auto derive = [&](std::uint8_t type) {
    std::array<std::uint8_t, 16> block{};
    block[0] = type;
    std::memcpy(block.data() + 1, app_nonce.data(), 3);
    std::memcpy(block.data() + 4, net_id.data(), 3);
    std::memcpy(block.data() + 7, dev_nonce.data(), 2);
    SymmetricKey k;
    k.bytes = aes128_encrypt_block(app_key, block);
    return k;
  };
  return {derive(0x01), derive(0x02)};
}

}  // namespace hyperlora::crypto
