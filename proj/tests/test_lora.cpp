#include <gtest/gtest.h>

#include <openssl/evp.h>

#include "hyperlora/lora.hpp"
#include "support.hpp"

using namespace hyperlora;
using namespace hyperlora::lora;

namespace {

template <std::size_t N>
std::array<std::uint8_t, N> random_array(crypto::Rng& rng) {
  std::array<std::uint8_t, N> a{};
  crypto::fill_random(rng, a);
  return a;
}

JoinRequestFrame sample_request(crypto::Rng& rng, const SymmetricKey& key) {
  JoinRequestFrame f;
  f.app_eui = random_array<8>(rng);
  f.dev_eui = random_array<8>(rng);
  f.dev_nonce = random_array<2>(rng);
  return with_mic(f, key);
}

DataFrame sample_data(crypto::Rng& rng, const SymmetricKey& key, std::size_t len,
                      Direction dir = Direction::up) {
  DataFrame f;
  f.direction = dir;
  f.dev_addr = random_array<4>(rng);
  f.fcnt = static_cast<std::uint16_t>(rng());
  f.fport = static_cast<std::uint8_t>(1 + rng() % 200);
  f.frm_payload.resize(len);
  crypto::fill_random(rng, f.frm_payload);
  return with_mic(f, key);
}

// Counter-mode keystream recomputed from the block layout with raw EVP calls.
Bytes keystream_oracle(const SymmetricKey& key, const DevAddr& addr, std::uint16_t fcnt,
                       Direction dir, std::size_t len) {
  Bytes out;
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  for (std::uint8_t i = 1; out.size() < len; ++i) {
    std::uint8_t a[16] = {0x01, 0, 0, 0, 0, static_cast<std::uint8_t>(dir),
                          addr[0], addr[1], addr[2], addr[3],
                          static_cast<std::uint8_t>(fcnt & 0xff), static_cast<std::uint8_t>(fcnt >> 8),
                          0, 0, 0, i};
    std::uint8_t s[16];
    int n = 0;
    EVP_EncryptInit_ex(ctx, EVP_aes_128_ecb(), nullptr, key.bytes.data(), nullptr);
    EVP_CIPHER_CTX_set_padding(ctx, 0);
    EVP_EncryptUpdate(ctx, s, &n, a, 16);
    out.insert(out.end(), s, s + 16);
  }
  EVP_CIPHER_CTX_free(ctx);
  out.resize(len);
  return out;
}

}  // namespace

TEST(Frames, JoinRequestLayoutAndRoundTrip) {
  crypto::Rng rng(1);
  auto key = SymmetricKey::random(rng);
  auto f = sample_request(rng, key);
  auto wire = serialize_frame(f);
  ASSERT_EQ(wire.size(), 23u);
  EXPECT_EQ(wire[0], 0x00);
  EXPECT_TRUE(std::equal(f.app_eui.begin(), f.app_eui.end(), wire.begin() + 1));
  EXPECT_TRUE(std::equal(f.dev_eui.begin(), f.dev_eui.end(), wire.begin() + 9));
  EXPECT_TRUE(std::equal(f.dev_nonce.begin(), f.dev_nonce.end(), wire.begin() + 17));
  EXPECT_EQ(Bytes(wire.begin() + 19, wire.end()), Bytes(f.mic.begin(), f.mic.end()));
  EXPECT_EQ(f.mic, crypto::mac32(key, ByteView(wire).first(19)));
  EXPECT_EQ(std::get<JoinRequestFrame>(parse_frame(wire)), f);
  wire.pop_back();
  EXPECT_THROW(parse_frame(wire), MalformedFrame);
}

TEST(Frames, DataFrameLayoutAndPayloadBoundary) {
  crypto::Rng rng(2);
  auto key = SymmetricKey::random(rng);
  auto f = sample_data(rng, key, 242);
  auto wire = serialize_frame(f);
  ASSERT_EQ(wire.size(), 254u);
  EXPECT_EQ(wire[0], 0x40);
  EXPECT_EQ(wire[5], f.fcnt & 0xff);
  EXPECT_EQ(wire[6], f.fcnt >> 8);
  EXPECT_EQ(wire[7], f.fport);
  EXPECT_EQ(std::get<DataFrame>(parse_frame(wire)), f);

  auto parts = split_data_frame(wire);
  EXPECT_EQ(parts.meta.size(), 8u);
  EXPECT_EQ(parts.payload.size(), 242u);
  EXPECT_EQ(Bytes(parts.mic.begin(), parts.mic.end()), Bytes(f.mic.begin(), f.mic.end()));

  f.frm_payload.push_back(0);
  EXPECT_THROW(serialize_frame(f), MalformedFrame);
  wire.insert(wire.begin() + 8, 0);
  EXPECT_THROW(parse_frame(wire), MalformedFrame);
  EXPECT_THROW(split_data_frame(wire), MalformedFrame);

  auto empty = sample_data(rng, key, 0, Direction::down);
  auto ew = serialize_frame(empty);
  EXPECT_EQ(ew.size(), 12u);
  EXPECT_EQ(ew[0], 0x60);
  EXPECT_EQ(std::get<DataFrame>(parse_frame(ew)), empty);
}

TEST(Frames, UnknownMhdrAndTruncation) {
  EXPECT_THROW(parse_frame(Bytes{}), MalformedFrame);
  EXPECT_THROW(parse_frame(Bytes(23, 0xE0)), MalformedFrame);
  EXPECT_THROW(parse_frame(Bytes{0x40, 1, 2, 3}), MalformedFrame);
  EXPECT_THROW(parse_frame(Bytes(14, 0x20)), MalformedFrame);
  EXPECT_THROW(split_data_frame(Bytes(23, 0x00)), MalformedFrame);
}

TEST(Frames, RandomFramesAreABijection) {
  crypto::Rng rng(3);
  auto key = SymmetricKey::random(rng);
  for (int i = 0; i < 2000; ++i) {
    Frame f;
    switch (rng() % 3) {
      case 0: f = sample_request(rng, key); break;
      case 1: {
        JoinAcceptFrame a;
        a.app_nonce = random_array<3>(rng);
        a.net_id = random_array<3>(rng);
        a.dev_addr = random_array<4>(rng);
        a.mic = random_array<4>(rng);
        f = a;
        break;
      }
      default:
        f = sample_data(rng, key, rng() % 243, rng() % 2 ? Direction::up : Direction::down);
    }
    auto wire = serialize_frame(f);
    ASSERT_EQ(parse_frame(wire), f);
    ASSERT_EQ(serialize_frame(parse_frame(wire)), wire);
  }
}

TEST(Mic, VerifyAndWrongKey) {
  crypto::Rng rng(4);
  auto key = SymmetricKey::random(rng);
  auto other = SymmetricKey::random(rng);
  auto f = sample_data(rng, key, 10);
  EXPECT_TRUE(verify_mic(f, key));
  EXPECT_FALSE(verify_mic(f, other));
  auto bumped = f;
  bumped.fcnt ^= 0x0001;
  EXPECT_FALSE(verify_mic(bumped, key));
  auto req = sample_request(rng, key);
  EXPECT_TRUE(verify_mic(req, key));
  EXPECT_FALSE(verify_mic(req, other));
}

TEST(Mic, DirectionByteSeparatesUpAndDown) {
  crypto::Rng rng(5);
  auto key = SymmetricKey::random(rng);
  auto up = sample_data(rng, key, 8, Direction::up);
  Bytes input = serialize_frame(up);
  input.resize(input.size() - 4);
  input.push_back(0x00);
  EXPECT_EQ(up.mic, crypto::mac32(key, input));
  auto down = up;
  down.direction = Direction::down;
  EXPECT_NE(compute_mic(down, key), up.mic);
}

TEST(Mic, EveryPrecedingBytePositionCovered) {
  crypto::Rng rng(6);
  auto key = SymmetricKey::random(rng);
  JoinAcceptFrame accept;
  accept.app_nonce = random_array<3>(rng);
  accept.net_id = random_array<3>(rng);
  accept.dev_addr = random_array<4>(rng);
  accept = with_mic(accept, key);
  std::vector<Frame> frames = {sample_request(rng, key), accept, sample_data(rng, key, 17),
                               sample_data(rng, key, 5, Direction::down)};
  for (const auto& f : frames) {
    auto wire = serialize_frame(f);
    for (std::size_t pos = 0; pos + 4 < wire.size(); ++pos)
      for (int bit = 0; bit < 8; ++bit) {
        auto bad = wire;
        bad[pos] ^= static_cast<std::uint8_t>(1u << bit);
        bool still_valid = false;
        try {
          still_valid = std::visit([&](const auto& g) { return verify_mic(g, key); }, parse_frame(bad));
        } catch (const MalformedFrame&) {
        }
        ASSERT_FALSE(still_valid) << "position " << pos << " bit " << bit;
      }
  }
}

TEST(Payload, MatchesKeystreamOracle) {
  crypto::Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    auto key = SymmetricKey::random(rng);
    auto addr = random_array<4>(rng);
    auto fcnt = static_cast<std::uint16_t>(rng());
    auto dir = rng() % 2 ? Direction::up : Direction::down;
    AppPlaintext p{Bytes(rng() % 243)};
    crypto::fill_random(rng, p.bytes);
    auto c = encrypt_payload(key, addr, fcnt, dir, p);
    auto ks = keystream_oracle(key, addr, fcnt, dir, p.bytes.size());
    for (std::size_t j = 0; j < p.bytes.size(); ++j) ASSERT_EQ(c.bytes[j], p.bytes[j] ^ ks[j]);
    EXPECT_EQ(decrypt_payload(key, addr, fcnt, dir, c), p);
  }
}

TEST(Payload, CounterAndEmpty) {
  crypto::Rng rng(8);
  auto key = SymmetricKey::random(rng);
  auto addr = random_array<4>(rng);
  AppPlaintext p{Bytes(20, 0x41)};
  auto c1 = encrypt_payload(key, addr, 9, Direction::up, p);
  auto c2 = encrypt_payload(key, addr, 10, Direction::up, p);
  EXPECT_NE(c1, c2);
  EXPECT_NE(c1, encrypt_payload(key, addr, 9, Direction::down, p));
  EXPECT_NE(c1.bytes, p.bytes);
  EXPECT_TRUE(encrypt_payload(key, addr, 9, Direction::up, AppPlaintext{}).bytes.empty());
}

TEST(JoinAccept, KeyAgreementEndToEnd) {
  crypto::Rng rng(9);
  NetId net_id = {0x13, 0, 0};
  for (int i = 0; i < 100; ++i) {
    auto app_key = SymmetricKey::random(rng);
    auto req = sample_request(rng, app_key);

    // Join server side.
    ledger::SessionContext ctx;
    ctx.dev_eui = req.dev_eui;
    ctx.app_key = app_key;
    ctx.dev_addr = random_array<4>(rng);
    ctx.dev_nonce = req.dev_nonce;
    ctx.app_nonce = random_array<3>(rng);
    auto server_keys = crypto::derive_session_keys(app_key, ctx.app_nonce, net_id, ctx.dev_nonce);
    ctx.nwk_s_key = server_keys.nwk_s_key;
    auto wire = seal_join_accept(serialize_frame(build_join_accept(ctx, app_key, net_id)), app_key,
                                 req.dev_nonce);
    ASSERT_EQ(wire.size(), 15u);
    EXPECT_EQ(wire[0], 0x20);

    // Device side.
    auto accept = open_join_accept(wire, app_key, req.dev_nonce);
    ASSERT_TRUE(accept);
    EXPECT_EQ(accept->dev_addr, ctx.dev_addr);
    EXPECT_EQ(accept->app_nonce, ctx.app_nonce);
    auto device_keys = crypto::derive_session_keys(app_key, accept->app_nonce, accept->net_id, req.dev_nonce);
    EXPECT_EQ(device_keys.nwk_s_key, ctx.nwk_s_key);
    EXPECT_EQ(device_keys.app_s_key, server_keys.app_s_key);

    EXPECT_FALSE(open_join_accept(wire, SymmetricKey::random(rng), req.dev_nonce));
    auto tampered = wire;
    tampered[1 + rng() % 14] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    EXPECT_FALSE(open_join_accept(tampered, app_key, req.dev_nonce));
  }
}

TEST(JoinAccept, SealHidesFieldsAndIsSelfInverse) {
  crypto::Rng rng(10);
  auto key = SymmetricKey::random(rng);
  JoinAcceptFrame f;
  f.dev_addr = {1, 2, 3, 4};
  f = with_mic(f, key);
  auto clear = serialize_frame(f);
  DevNonce nonce = {7, 9};
  auto sealed = seal_join_accept(clear, key, nonce);
  EXPECT_NE(sealed, clear);
  EXPECT_EQ(seal_join_accept(sealed, key, nonce), clear);
  EXPECT_FALSE(open_join_accept(sealed, key, DevNonce{7, 8}));
  EXPECT_THROW(seal_join_accept(Bytes(14), key, nonce), MalformedFrame);
}

TEST(Describe, LabelsFields) {
  crypto::Rng rng(11);
  auto key = SymmetricKey::random(rng);
  auto text = describe_frame(serialize_frame(sample_data(rng, key, 3)));
  EXPECT_NE(text.find("DataUp"), std::string::npos);
  EXPECT_NE(text.find("fcnt"), std::string::npos);
  EXPECT_NE(text.find("3 bytes"), std::string::npos);
  EXPECT_NE(describe_frame(serialize_frame(sample_request(rng, key))).find("JoinRequest"),
            std::string::npos);
  EXPECT_THROW(describe_frame(Bytes{0xff}), MalformedFrame);
}
