#include "hyperlora/ledger.hpp"

#include <cstring>
#include <mutex>

namespace hyperlora::ledger {

void KeyDirectory::add(const EntityId& id, Bytes public_key, Role role) {
  if (public_key.size() != crypto::kPublicKeySize) throw crypto::KeyError("bad public key for " + id);
  entries_[id] = Entry{std::move(public_key), role};
}

const Bytes& KeyDirectory::public_key_of(const EntityId& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw UnknownEntity("unknown entity '" + id + "'");
  return it->second.public_key;
}

Role KeyDirectory::role_of(const EntityId& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw UnknownEntity("unknown entity '" + id + "'");
  return it->second.role;
}

Bytes SessionContext::serialize() const {
  auto out = concat({dev_eui, app_key.view(), dev_addr, nwk_s_key.view(), dev_nonce, app_nonce});
  return out;
}

SessionContext SessionContext::deserialize(ByteView data) {
  if (data.size() != kSerializedSize) throw DecodeError("session context must be 49 bytes");
  ByteReader r(data);
  SessionContext c;
  c.dev_eui = r.array<8>();
  c.app_key.bytes = r.array<16>();
  c.dev_addr = r.array<4>();
  c.nwk_s_key.bytes = r.array<16>();
  c.dev_nonce = r.array<2>();
  c.app_nonce = r.array<3>();
  return c;
}

Bytes Transaction::signed_message() const {
  ByteWriter w;
  w.u64(t);
  w.raw(data);
  return std::move(w).take();
}

Digest Transaction::leaf() const { return crypto::hash(h); }

void Transaction::encode(ByteWriter& w) const {
  w.blob16(as_bytes(requester));
  w.blob16(h);
  w.u64(t);
  w.blob32(data);
}

Transaction Transaction::decode(ByteReader& r) {
  Transaction tx;
  auto id = r.blob16();
  tx.requester.assign(id.begin(), id.end());
  tx.h = r.blob16();
  tx.t = r.u64();
  tx.data = r.blob32();
  return tx;
}

Bytes ContextLabel::encode() const { return concat({dev_addr, dev_eui}); }

ContextLabel ContextLabel::decode(ByteView label) {
  if (label.size() != kSize) throw DecodeError("context label must be 12 bytes");
  ContextLabel l;
  std::memcpy(l.dev_addr.data(), label.data(), 4);
  std::memcpy(l.dev_eui.data(), label.data() + 4, 8);
  return l;
}

Transaction make_network_tx(const KeyPair& signer, ByteView recipient_public,
                            const SessionContext& context, Timestamp t, crypto::Rng& rng) {
  Transaction tx;
  tx.requester = signer.entity_id;
  tx.t = t;
  auto label = ContextLabel{context.dev_addr, context.dev_eui}.encode();
  tx.data = crypto::pk_encrypt(recipient_public, context.serialize(), rng, label);
  tx.h = crypto::sign(signer.private_key, tx.signed_message());
  return tx;
}

Transaction make_network_tx(const KeyPair& signer, const SessionContext& context, Timestamp t,
                            crypto::Rng& rng) {
  return make_network_tx(signer, signer.public_key, context, t, rng);
}

Transaction make_app_tx(const KeyPair& server, ByteView payload, Timestamp t) {
  Transaction tx;
  tx.requester = server.entity_id;
  tx.t = t;
  tx.data.assign(payload.begin(), payload.end());
  tx.h = crypto::sign(server.private_key, tx.signed_message());
  return tx;
}

bool verify_tx(const Transaction& tx, const KeyDirectory& directory) {
  const auto& pub = directory.public_key_of(tx.requester);
  return crypto::verify(pub, tx.signed_message(), tx.h);
}

SessionContext open_context(const Transaction& tx, ByteView private_key) {
  return SessionContext::deserialize(crypto::pk_decrypt(private_key, tx.data));
}

Digest build_merkle(std::span<const Digest> leaves) {
  if (leaves.empty()) throw ArgumentError("build_merkle: no transactions");
  auto pair_hash = [](const Digest& a, const Digest& b) {
    return crypto::hash(concat({a.view(), b.view()}));
  };
  std::vector<Digest> level(leaves.begin(), leaves.end());
  // R = 2^x + y with 0 <= y < 2^x; levels z = 1 .. x+1 each halve (rounding up).
  std::size_t r = leaves.size();
  int x = 0;
  while ((std::size_t{1} << (x + 1)) <= r) ++x;
  for (int z = 1; z <= x + 1; ++z) {
    std::vector<Digest> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      if (i + 1 < level.size())
        next.push_back(pair_hash(level[i], level[i + 1]));
      else
        next.push_back(level[i]);
    }
    level = std::move(next);
  }
  return level.front();
}

namespace {

void encode_body(ByteWriter& w, const std::vector<Transaction>& body) {
  for (const auto& tx : body) tx.encode(w);
}

void encode_prefix(ByteWriter& w, const Block& b) {
  w.u64(b.zeta);
  w.u64(b.header.tau);
  w.raw(b.header.merkle_root.view());
  w.raw(b.header.prev_hash.view());
}

}  // namespace

Digest Block::hash() const {
  ByteWriter w;
  encode_prefix(w, *this);
  encode_body(w, body);
  return crypto::hash(w.bytes());
}

Bytes Block::seal_message(LedgerKind kind) const {
  ByteWriter w;
  w.raw(as_bytes("HLRA-seal"));
  w.u8(static_cast<std::uint8_t>(kind));
  encode_prefix(w, *this);
  return std::move(w).take();
}

Bytes Block::serialize() const {
  ByteWriter w;
  encode_prefix(w, *this);
  w.u32(static_cast<std::uint32_t>(body.size()));
  encode_body(w, body);
  w.blob16(as_bytes(seal.proposer));
  w.blob16(seal.signature);
  return std::move(w).take();
}

Block Block::deserialize(ByteView data) {
  ByteReader r(data);
  Block b;
  b.zeta = r.u64();
  b.header.tau = r.u64();
  b.header.merkle_root = Digest::from(r.raw(crypto::kDigestSize));
  b.header.prev_hash = Digest::from(r.raw(crypto::kDigestSize));
  std::uint32_t count = r.u32();
  // Each transaction needs at least 14 bytes; guards absurd counts.
  if (count > r.remaining() / 14) throw DecodeError("transaction count exceeds block size");
  b.body.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) b.body.push_back(Transaction::decode(r));
  auto proposer = r.blob16();
  b.seal.proposer.assign(proposer.begin(), proposer.end());
  b.seal.signature = r.blob16();
  r.expect_done("block");
  return b;
}

Block assemble_block(std::vector<Transaction> txs, std::uint64_t zeta, Timestamp tau,
                     const Block* prev, const KeyPair& proposer, LedgerKind kind) {
  if (txs.empty()) throw ArgumentError("assemble_block: empty transaction list");
  std::vector<Digest> leaves;
  leaves.reserve(txs.size());
  for (const auto& tx : txs) leaves.push_back(tx.leaf());

  Block b;
  b.zeta = zeta;
  b.header.tau = tau;
  b.header.merkle_root = build_merkle(leaves);
  b.header.prev_hash = prev ? prev->hash() : Digest::zero();
  b.body = std::move(txs);
  b.seal.proposer = proposer.entity_id;
  b.seal.signature = crypto::sign(proposer.private_key, b.seal_message(kind));
  return b;
}

const char* to_string(BlockCheck c) {
  switch (c) {
    case BlockCheck::ok: return "ok";
    case BlockCheck::empty_body: return "empty body";
    case BlockCheck::bad_index: return "block index does not follow predecessor";
    case BlockCheck::bad_prev_hash: return "previous-block hash mismatch";
    case BlockCheck::bad_merkle_root: return "Merkle root mismatch";
    case BlockCheck::bad_tx_signature: return "transaction signature invalid";
    case BlockCheck::bad_requester_role: return "requester not allowed on this ledger";
    case BlockCheck::bad_context_label: return "malformed context envelope";
    case BlockCheck::bad_seal: return "proposer seal invalid";
  }
  return "?";
}

BlockCheck check_block(const Block& block, const Block* prev, const KeyDirectory& directory,
                       LedgerKind kind) {
  if (block.body.empty()) return BlockCheck::empty_body;
  std::uint64_t expected_zeta = prev ? prev->zeta + 1 : 0;
  if (block.zeta != expected_zeta) return BlockCheck::bad_index;
  Digest expected_prev = prev ? prev->hash() : Digest::zero();
  if (block.header.prev_hash != expected_prev) return BlockCheck::bad_prev_hash;

  std::vector<Digest> leaves;
  leaves.reserve(block.body.size());
  for (const auto& tx : block.body) {
    if (kind == LedgerKind::application && directory.role_of(tx.requester) != Role::server)
      return BlockCheck::bad_requester_role;
    if (kind == LedgerKind::network && directory.role_of(tx.requester) == Role::orderer)
      return BlockCheck::bad_requester_role;
    if (!verify_tx(tx, directory)) return BlockCheck::bad_tx_signature;
    if (kind == LedgerKind::network) {
      try {
        ContextLabel::decode(crypto::envelope_label(tx.data));
      } catch (const Error&) {
        return BlockCheck::bad_context_label;
      }
    }
    leaves.push_back(tx.leaf());
  }
  if (build_merkle(leaves) != block.header.merkle_root) return BlockCheck::bad_merkle_root;

  const auto& proposer_key = directory.public_key_of(block.seal.proposer);
  if (!crypto::verify(proposer_key, block.seal_message(kind), block.seal.signature))
    return BlockCheck::bad_seal;
  return BlockCheck::ok;
}

namespace {

void index_into(const Block& block, WorldState& state, std::map<DevEui, DevAddr>* eui_index) {
  for (const auto& tx : block.body) {
    auto label = ContextLabel::decode(crypto::envelope_label(tx.data));
    state[dev_addr_value(label.dev_addr)] =
        WorldStateEntry{tx.requester, tx.t, tx.data, block.zeta, label.dev_eui};
    if (eui_index) (*eui_index)[label.dev_eui] = label.dev_addr;
  }
}

}  // namespace

WorldState replay_world_state(std::span<const Block> blocks) {
  WorldState state;
  for (const auto& b : blocks) index_into(b, state, nullptr);
  return state;
}

Ledger::Ledger(LedgerKind kind) : kind_(kind), mutex_(std::make_unique<std::shared_mutex>()) {}

std::uint64_t Ledger::height() const {
  std::shared_lock lock(*mutex_);
  return blocks_.size();
}

std::vector<Block> Ledger::snapshot() const {
  std::shared_lock lock(*mutex_);
  return blocks_;
}

BlockCheck Ledger::append(Block block, const KeyDirectory& directory) {
  BlockCheck result;
  try {
    result = check_block(block, tip(), directory, kind_);
  } catch (const UnknownEntity&) {
    result = BlockCheck::bad_tx_signature;
  }
  if (result != BlockCheck::ok) return result;
  std::unique_lock lock(*mutex_);
  blocks_.push_back(std::move(block));
  if (kind_ == LedgerKind::network) index_into(blocks_.back(), world_state_, &eui_index_);
  return BlockCheck::ok;
}

std::optional<WorldStateEntry> Ledger::query_context(const DevAddr& addr) const {
  std::shared_lock lock(*mutex_);
  auto it = world_state_.find(dev_addr_value(addr));
  if (it == world_state_.end()) return std::nullopt;
  return it->second;
}

std::optional<DevAddr> Ledger::dev_addr_of(const DevEui& eui) const {
  std::shared_lock lock(*mutex_);
  auto it = eui_index_.find(eui);
  if (it == eui_index_.end()) return std::nullopt;
  return it->second;
}

ChainCheck validate_chain(std::span<const Block> blocks, const KeyDirectory& directory,
                          LedgerKind kind) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Block* prev = i == 0 ? nullptr : &blocks[i - 1];
    try {
      auto c = check_block(blocks[i], prev, directory, kind);
      if (c != BlockCheck::ok) return {false, i, to_string(c)};
    } catch (const Error& e) {
      return {false, i, e.what()};
    }
  }
  return {};
}

}  // namespace hyperlora::ledger
