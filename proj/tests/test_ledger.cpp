#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "hyperlora/ledger.hpp"
#include "support.hpp"

using namespace hyperlora;
using namespace hyperlora::ledger;
using hyperlora::testing::Cast;
using hyperlora::testing::merkle_oracle;
using hyperlora::testing::network_chain;
using hyperlora::testing::random_context;

namespace {

Digest H2(const Digest& a, const Digest& b) { return crypto::hash(concat({a.view(), b.view()})); }

std::vector<Digest> random_digests(crypto::Rng& rng, std::size_t n) {
  std::vector<Digest> out(n);
  for (auto& d : out) crypto::fill_random(rng, d.bytes);
  return out;
}

class LedgerTest : public ::testing::Test {
 protected:
  Cast cast;
  crypto::Rng rng{7};

  Transaction ctx_tx(std::uint32_t addr, Timestamp t, int gw = 0) {
    return make_network_tx(cast.gateways[gw], random_context(rng, addr), t, rng);
  }
  Block next(const Ledger& l, std::vector<Transaction> txs, LedgerKind kind = LedgerKind::network) {
    return assemble_block(std::move(txs), l.height(), 10 * l.height(), l.tip(), cast.orderer, kind);
  }
};

}  // namespace

TEST_F(LedgerTest, ContextSerializationIsExactConcatenation) {
  auto c = random_context(rng, 0x01020304);
  auto s = c.serialize();
  ASSERT_EQ(s.size(), 49u);
  Bytes expected;
  expected.insert(expected.end(), c.dev_eui.begin(), c.dev_eui.end());
  expected.insert(expected.end(), c.app_key.bytes.begin(), c.app_key.bytes.end());
  expected.insert(expected.end(), c.dev_addr.begin(), c.dev_addr.end());
  expected.insert(expected.end(), c.nwk_s_key.bytes.begin(), c.nwk_s_key.bytes.end());
  expected.insert(expected.end(), c.dev_nonce.begin(), c.dev_nonce.end());
  expected.insert(expected.end(), c.app_nonce.begin(), c.app_nonce.end());
  EXPECT_EQ(s, expected);
  EXPECT_EQ(SessionContext::deserialize(s), c);
  EXPECT_THROW(SessionContext::deserialize(Bytes(48)), DecodeError);
}

TEST_F(LedgerTest, NetworkTxVerifiesAndOpens) {
  auto c = random_context(rng, 5);
  auto tx = make_network_tx(cast.gateways[0], c, 123, rng);
  EXPECT_EQ(tx.requester, "gateway-0");
  EXPECT_TRUE(verify_tx(tx, cast.directory));
  EXPECT_TRUE(crypto::verify(cast.gateways[0].public_key, tx.signed_message(), tx.h));
  EXPECT_EQ(open_context(tx, cast.gateways[0].private_key), c);
  EXPECT_EQ(crypto::pk_decrypt(cast.gateways[0].private_key, tx.data).size(), 49u);
  EXPECT_THROW(open_context(tx, cast.gateways[1].private_key), crypto::DecryptionError);

  auto later = tx;
  later.t += 1;
  EXPECT_FALSE(verify_tx(later, cast.directory));
}

TEST_F(LedgerTest, VerifyTxFailures) {
  auto tx = ctx_tx(1, 1);
  auto flipped = tx;
  flipped.data[flipped.data.size() / 2] ^= 0x01;
  EXPECT_FALSE(verify_tx(flipped, cast.directory));

  auto forged = tx;
  forged.h = crypto::sign(cast.gateways[1].private_key, tx.signed_message());
  EXPECT_FALSE(verify_tx(forged, cast.directory));

  auto stranger = tx;
  stranger.requester = "gateway-99";
  EXPECT_THROW(verify_tx(stranger, cast.directory), UnknownEntity);
}

TEST_F(LedgerTest, AppTxStoresPayloadVerbatim) {
  Bytes payload = {1, 2, 3, 250, 0};
  auto tx = make_app_tx(cast.servers[0], payload, 9);
  EXPECT_EQ(tx.data, payload);
  EXPECT_TRUE(verify_tx(tx, cast.directory));
}

TEST(Merkle, HandTraces) {
  crypto::Rng rng(1);
  auto h = random_digests(rng, 4);
  EXPECT_EQ(build_merkle(std::span(h).first(1)), h[0]);
  EXPECT_EQ(build_merkle(std::span(h).first(2)), H2(h[0], h[1]));
  EXPECT_EQ(build_merkle(std::span(h).first(3)), H2(H2(h[0], h[1]), h[2]));
  EXPECT_EQ(build_merkle(h), H2(H2(h[0], h[1]), H2(h[2], h[3])));
  EXPECT_THROW(build_merkle({}), ArgumentError);
}

TEST(Merkle, MatchesRecursiveOracleUpTo64) {
  crypto::Rng rng(2);
  for (std::size_t r = 1; r <= 64; ++r)
    for (int trial = 0; trial < 100; ++trial) {
      auto h = random_digests(rng, r);
      ASSERT_EQ(build_merkle(h), merkle_oracle(h)) << "R=" << r;
    }
}

TEST_F(LedgerTest, SingleTxBlockRootIsItsLeaf) {
  Ledger l(LedgerKind::network);
  auto tx = ctx_tx(1, 1);
  auto b = next(l, {tx});
  EXPECT_EQ(b.header.merkle_root, tx.leaf());
  EXPECT_EQ(tx.leaf(), crypto::hash(tx.h));
}

TEST_F(LedgerTest, GenesisAndChaining) {
  Ledger l(LedgerKind::network);
  auto g = next(l, {ctx_tx(1, 1)});
  EXPECT_EQ(g.zeta, 0u);
  EXPECT_EQ(g.header.prev_hash, Digest::zero());
  ASSERT_EQ(l.append(g, cast.directory), BlockCheck::ok);
  auto b1 = next(l, {ctx_tx(2, 2), ctx_tx(3, 3)});
  EXPECT_EQ(b1.header.prev_hash, g.hash());
  EXPECT_TRUE(validate_block(b1, &g, cast.directory, LedgerKind::network));
  EXPECT_THROW(assemble_block({}, 0, 0, nullptr, cast.orderer, LedgerKind::network), ArgumentError);
}

TEST_F(LedgerTest, BlockHashCoversIndexHeaderAndBody) {
  Ledger l(LedgerKind::network);
  auto b = next(l, {ctx_tx(1, 1), ctx_tx(2, 2)});
  ByteWriter w;
  w.u64(b.zeta);
  w.u64(b.header.tau);
  w.raw(b.header.merkle_root.bytes);
  w.raw(b.header.prev_hash.bytes);
  for (const auto& tx : b.body) tx.encode(w);
  EXPECT_EQ(b.hash(), crypto::hash(w.bytes()));
}

TEST_F(LedgerTest, ValidateRejections) {
  Ledger l(LedgerKind::network);
  auto g = next(l, {ctx_tx(1, 1)});
  ASSERT_EQ(l.append(g, cast.directory), BlockCheck::ok);
  auto b = next(l, {ctx_tx(2, 2), ctx_tx(3, 3)});
  const auto kind = LedgerKind::network;
  EXPECT_EQ(check_block(b, &g, cast.directory, kind), BlockCheck::ok);

  auto reordered = b;
  std::swap(reordered.body[0], reordered.body[1]);
  EXPECT_EQ(check_block(reordered, &g, cast.directory, kind), BlockCheck::bad_merkle_root);

  auto wrong_index = b;
  wrong_index.zeta = 5;
  EXPECT_EQ(check_block(wrong_index, &g, cast.directory, kind), BlockCheck::bad_index);

  auto wrong_prev = b;
  wrong_prev.header.prev_hash.bytes[0] ^= 1;
  EXPECT_EQ(check_block(wrong_prev, &g, cast.directory, kind), BlockCheck::bad_prev_hash);

  auto retimed = b;
  retimed.header.tau += 1;
  EXPECT_EQ(check_block(retimed, &g, cast.directory, kind), BlockCheck::bad_seal);

  auto unsigned_tx = b;
  unsigned_tx.body[0].t += 1;
  EXPECT_EQ(check_block(unsigned_tx, &g, cast.directory, kind), BlockCheck::bad_tx_signature);

  auto empty = b;
  empty.body.clear();
  EXPECT_EQ(check_block(empty, &g, cast.directory, kind), BlockCheck::empty_body);

  auto stranger = b;
  stranger.body[0].requester = "nobody";
  EXPECT_THROW(check_block(stranger, &g, cast.directory, kind), UnknownEntity);
}

TEST_F(LedgerTest, RequesterRolesPerLedger) {
  Ledger a(LedgerKind::application);
  auto by_gateway = assemble_block({make_app_tx(cast.gateways[0], Bytes{1}, 1)}, 0, 0, nullptr,
                                   cast.orderer, LedgerKind::application);
  EXPECT_EQ(check_block(by_gateway, nullptr, cast.directory, LedgerKind::application),
            BlockCheck::bad_requester_role);
  auto by_server = assemble_block({make_app_tx(cast.servers[1], Bytes{1}, 1)}, 0, 0, nullptr,
                                  cast.orderer, LedgerKind::application);
  EXPECT_EQ(a.append(by_server, cast.directory), BlockCheck::ok);

  // A network block must carry a context label and may not be replayed as
  // an application block.
  Ledger n(LedgerKind::network);
  auto app_as_network = assemble_block({make_app_tx(cast.servers[1], Bytes{1}, 1)}, 0, 0, nullptr,
                                       cast.orderer, LedgerKind::network);
  EXPECT_EQ(n.append(app_as_network, cast.directory), BlockCheck::bad_context_label);

  auto server_ctx = make_network_tx(cast.servers[0], random_context(rng, 3), 1, rng);
  auto network_block = assemble_block({server_ctx}, 0, 0, nullptr, cast.orderer, LedgerKind::network);
  EXPECT_EQ(n.append(network_block, cast.directory), BlockCheck::ok);
  EXPECT_EQ(check_block(network_block, nullptr, cast.directory, LedgerKind::application),
            BlockCheck::bad_seal);
}

TEST_F(LedgerTest, SingleByteFlipsAlwaysDetected) {
  Ledger l(LedgerKind::network);
  auto g = next(l, {ctx_tx(1, 1)});
  ASSERT_EQ(l.append(g, cast.directory), BlockCheck::ok);
  auto b = next(l, {ctx_tx(2, 2), ctx_tx(3, 3), ctx_tx(4, 4)});
  auto wire = b.serialize();
  crypto::Rng fuzz(99);
  int detected = 0;
  for (int i = 0; i < 1000; ++i) {
    auto bad = wire;
    bad[fuzz() % bad.size()] ^= static_cast<std::uint8_t>(1 + fuzz() % 255);
    try {
      auto parsed = Block::deserialize(bad);
      if (check_block(parsed, &g, cast.directory, LedgerKind::network) != BlockCheck::ok) ++detected;
    } catch (const Error&) {
      ++detected;
    }
  }
  EXPECT_EQ(detected, 1000);
}

TEST_F(LedgerTest, AppendUpdatesWorldState) {
  Ledger l(LedgerKind::network);
  EXPECT_FALSE(l.query_context(dev_addr_from(7)));
  auto first = ctx_tx(7, 1);
  ASSERT_EQ(l.append(next(l, {first}), cast.directory), BlockCheck::ok);
  auto e = l.query_context(dev_addr_from(7));
  ASSERT_TRUE(e);
  EXPECT_EQ(e->d_bar, first.data);
  EXPECT_EQ(e->requester, "gateway-0");

  auto second = ctx_tx(7, 2, 1);
  ASSERT_EQ(l.append(next(l, {second}), cast.directory), BlockCheck::ok);
  EXPECT_EQ(l.query_context(dev_addr_from(7))->d_bar, second.data);
  EXPECT_EQ(l.query_context(dev_addr_from(7))->requester, "gateway-1");
  EXPECT_FALSE(l.query_context(dev_addr_from(8)));
}

TEST_F(LedgerTest, ThirdRejoinWins) {
  Ledger l(LedgerKind::network);
  auto ctx = random_context(rng, 0x0100000a);
  std::vector<Transaction> committed;
  for (int j = 0; j < 3; ++j) {
    crypto::fill_random(rng, ctx.dev_nonce);
    ctx.nwk_s_key = crypto::SymmetricKey::random(rng);
    committed.push_back(make_network_tx(cast.gateways[0], ctx, 100 + j, rng));
    ASSERT_EQ(l.append(next(l, {committed.back()}), cast.directory), BlockCheck::ok);
  }
  auto entry = l.query_context(ctx.dev_addr);
  ASSERT_TRUE(entry);
  EXPECT_EQ(entry->d_bar, committed[2].data);
  EXPECT_EQ(open_context(committed[2], cast.gateways[0].private_key).nwk_s_key, ctx.nwk_s_key);
  EXPECT_EQ(l.dev_addr_of(ctx.dev_eui), ctx.dev_addr);
}

TEST_F(LedgerTest, BadAppendLeavesLedgerUnchanged) {
  Ledger l(LedgerKind::network);
  ASSERT_EQ(l.append(next(l, {ctx_tx(1, 1)}), cast.directory), BlockCheck::ok);
  auto b = next(l, {ctx_tx(2, 2)});
  b.header.prev_hash = Digest::zero();
  auto before = l.world_state();
  EXPECT_NE(l.append(b, cast.directory), BlockCheck::ok);
  EXPECT_EQ(l.height(), 1u);
  EXPECT_EQ(l.world_state(), before);
  auto stranger = next(l, {ctx_tx(3, 3)});
  stranger.body[0].requester = "nobody";
  EXPECT_EQ(l.append(stranger, cast.directory), BlockCheck::bad_tx_signature);
  EXPECT_EQ(l.height(), 1u);
}

TEST(WorldState, ReplayMatchesIncrementalIndex) {
  Cast cast;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto chain = network_chain(cast, 20, seed);
    EXPECT_EQ(replay_world_state(chain.blocks()), chain.world_state());
  }
}

TEST(ChainIo, DumpLoadRedumpIsIdentical) {
  Cast cast;
  auto chain = network_chain(cast, 12, 3);
  auto path = std::filesystem::temp_directory_path() / "hyperlora_chain_test.chain";
  dump_chain(chain, path.string());
  auto loaded = load_chain(path.string(), cast.directory);
  EXPECT_EQ(loaded.height(), chain.height());
  EXPECT_EQ(loaded.world_state(), chain.world_state());
  EXPECT_TRUE(validate_chain(loaded.blocks(), cast.directory, LedgerKind::network).ok);
  EXPECT_EQ(encode_chain(loaded), encode_chain(chain));
  EXPECT_EQ(peek_chain_kind(encode_chain(chain)), LedgerKind::network);
  std::filesystem::remove(path);
}

TEST(ChainIo, TamperedDumpFailsOnLoad) {
  Cast cast;
  auto chain = network_chain(cast, 5, 4);
  auto bytes = encode_chain(chain);
  crypto::Rng fuzz(5);
  for (int i = 0; i < 200; ++i) {
    auto bad = bytes;
    bad[7 + fuzz() % (bad.size() - 7)] ^= 0x40;
    EXPECT_ANY_THROW(decode_chain(bad, cast.directory));
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_chain(bad_magic, cast.directory), DecodeError);
}

TEST(ChainIo, DirectoryRoundTrip) {
  Cast cast;
  auto bytes = encode_directory(cast.directory);
  auto back = decode_directory(bytes);
  EXPECT_EQ(encode_directory(back), bytes);
  EXPECT_EQ(back.role_of("server-1"), Role::server);
  EXPECT_EQ(back.public_key_of("gateway-2"), cast.gateways[2].public_key);
  bytes.pop_back();
  EXPECT_THROW(decode_directory(bytes), DecodeError);
}

TEST(Concurrency, SnapshotsAreConsistentPrefixes) {
  Cast cast;
  auto source = network_chain(cast, 60, 6);
  Ledger l(LedgerKind::network);
  std::atomic<bool> done{false};
  std::atomic<int> bad{0};
  std::thread reader([&] {
    while (!done) {
      auto snap = l.snapshot();
      if (!validate_chain(snap, cast.directory, LedgerKind::network).ok) ++bad;
    }
  });
  for (const auto& b : source.blocks()) ASSERT_EQ(l.append(b, cast.directory), BlockCheck::ok);
  done = true;
  reader.join();
  EXPECT_EQ(bad.load(), 0);
  EXPECT_EQ(l.height(), 60u);
}
