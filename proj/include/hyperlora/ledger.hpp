#pragma once

// Transactions, Merkle roots, blocks and the two hash-chained ledgers.
//
// Binary conventions: integers little-endian; variable fields carry a u16
// (ids, signatures) or u32 (payloads) length prefix. The block hash that
// links a block to its successor is
//
//   H(zeta || tau || merkle_root || prev_hash || tx_1 || ... || tx_R)
//
// where each tx_r is  requester || h || t || data  in the encoding above.

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <vector>

#include "hyperlora/crypto.hpp"
#include "hyperlora/ids.hpp"

namespace hyperlora::ledger {

using crypto::Digest;
using crypto::KeyPair;
using crypto::SymmetricKey;

/// Requester id not present in the key directory.
class UnknownEntity : public Error {
 public:
  using Error::Error;
};

enum class Role : std::uint8_t { gateway, server, orderer };

/// Public keys of every permissioned participant.
class KeyDirectory {
 public:
  void add(const EntityId& id, Bytes public_key, Role role);
  void add(const KeyPair& kp, Role role) { add(kp.entity_id, kp.public_key, role); }

  bool contains(const EntityId& id) const { return entries_.count(id) != 0; }
  /// Throws UnknownEntity.
  const Bytes& public_key_of(const EntityId& id) const;
  Role role_of(const EntityId& id) const;

  struct Entry {
    Bytes public_key;
    Role role;
  };
  const std::map<EntityId, Entry>& entries() const { return entries_; }

 private:
  std::map<EntityId, Entry> entries_;
};

/// Plain per-device session state stored (encrypted) on the network ledger.
/// AppSKey is deliberately absent.
struct SessionContext {
  static constexpr std::size_t kSerializedSize = 49;

  DevEui dev_eui{};
  SymmetricKey app_key;
  DevAddr dev_addr{};
  SymmetricKey nwk_s_key;
  DevNonce dev_nonce{};
  AppNonce app_nonce{};

  /// DevEUI || AppKey || DevAddr || NwkSKey || DevNonce || AppNonce
  Bytes serialize() const;
  static SessionContext deserialize(ByteView data);

  bool operator==(const SessionContext&) const = default;
};

using Timestamp = std::uint64_t;  // milliseconds of simulated time

/// <requester, h, t, data>. On the network ledger data is the encrypted
/// session context; on the application ledger it is the device ciphertext.
struct Transaction {
  EntityId requester;
  Bytes h;
  Timestamp t = 0;
  Bytes data;

  /// t || data, the bytes covered by h.
  Bytes signed_message() const;
  /// Merkle leaf for this transaction: H(h).
  Digest leaf() const;
  void encode(ByteWriter& w) const;
  static Transaction decode(ByteReader& r);

  bool operator==(const Transaction&) const = default;
};

/// Clear label attached to network-ledger envelopes: DevAddr || DevEUI.
struct ContextLabel {
  DevAddr dev_addr{};
  DevEui dev_eui{};
  static constexpr std::size_t kSize = 12;
  Bytes encode() const;
  static ContextLabel decode(ByteView label);
};

/// Encrypts the context to recipient_public (normally the signer's own key)
/// and signs t || d_bar with the signer's private key.
Transaction make_network_tx(const KeyPair& signer, ByteView recipient_public,
                            const SessionContext& context, Timestamp t, crypto::Rng& rng);
Transaction make_network_tx(const KeyPair& signer, const SessionContext& context, Timestamp t,
                            crypto::Rng& rng);

/// The payload is stored as received; no ledger-layer encryption.
Transaction make_app_tx(const KeyPair& server, ByteView payload, Timestamp t);

/// Throws UnknownEntity if the requester has no registered key.
bool verify_tx(const Transaction& tx, const KeyDirectory& directory);

/// Decrypts the session context of a network transaction.
/// Throws crypto::DecryptionError if private_key does not own the envelope.
SessionContext open_context(const Transaction& tx, ByteView private_key);

/// Root of the Merkle tree over leaves h_1..h_R, pairing left to right level
/// by level and carrying an odd trailing node up unchanged. R = 1 yields h_1.
/// Throws ArgumentError on an empty list.
Digest build_merkle(std::span<const Digest> leaves);

enum class LedgerKind : std::uint8_t { network = 'N', application = 'A' };

struct BlockHeader {
  Timestamp tau = 0;
  Digest merkle_root;
  Digest prev_hash;
  bool operator==(const BlockHeader&) const = default;
};

/// Proposer signature over (kind, zeta, header).
struct Seal {
  EntityId proposer;
  Bytes signature;
  bool operator==(const Seal&) const = default;
};

struct Block {
  std::uint64_t zeta = 0;
  BlockHeader header;
  std::vector<Transaction> body;
  Seal seal;

  /// H(zeta || e || b); becomes prev_hash of the next block.
  Digest hash() const;
  Bytes seal_message(LedgerKind kind) const;
  Bytes serialize() const;
  /// Throws DecodeError.
  static Block deserialize(ByteView data);

  bool operator==(const Block&) const = default;
};

/// prev == nullptr assembles a genesis block (zero prev_hash).
/// Throws ArgumentError when txs is empty.
Block assemble_block(std::vector<Transaction> txs, std::uint64_t zeta, Timestamp tau,
                     const Block* prev, const KeyPair& proposer, LedgerKind kind);

enum class BlockCheck {
  ok,
  empty_body,
  bad_index,
  bad_prev_hash,
  bad_merkle_root,
  bad_tx_signature,
  bad_requester_role,
  bad_context_label,
  bad_seal,
};

const char* to_string(BlockCheck c);

/// Checks signatures of every transaction, the Merkle root, the link to
/// prev (genesis when prev == nullptr), the index step and the seal.
/// Throws UnknownEntity for unregistered requesters or proposers.
BlockCheck check_block(const Block& block, const Block* prev, const KeyDirectory& directory,
                       LedgerKind kind);
inline bool validate_block(const Block& block, const Block* prev, const KeyDirectory& directory,
                           LedgerKind kind) {
  return check_block(block, prev, directory, kind) == BlockCheck::ok;
}

/// Latest committed context for one DevAddr.
struct WorldStateEntry {
  EntityId requester;
  Timestamp t = 0;
  Bytes d_bar;
  std::uint64_t block = 0;
  DevEui dev_eui{};
  bool operator==(const WorldStateEntry&) const = default;
};

using WorldState = std::map<std::uint32_t, WorldStateEntry>;

/// Rebuilds the world state by replaying a chain from genesis.
WorldState replay_world_state(std::span<const Block> blocks);

/// Append-only chain plus the world-state index (network ledger only).
/// Single writer; snapshot() and height() may be called from other threads.
class Ledger {
 public:
  explicit Ledger(LedgerKind kind);

  LedgerKind kind() const { return kind_; }
  std::uint64_t height() const;
  bool empty() const { return height() == 0; }
  const Block* tip() const { return blocks_.empty() ? nullptr : &blocks_.back(); }
  /// Owner thread only.
  const std::vector<Block>& blocks() const { return blocks_; }
  /// Consistent copy of the committed prefix; safe from any thread.
  std::vector<Block> snapshot() const;

  /// Validates against the tip and appends. The ledger is unchanged unless the
  /// result is ok. Unknown requesters are reported as bad_tx_signature.
  BlockCheck append(Block block, const KeyDirectory& directory);

  std::optional<WorldStateEntry> query_context(const DevAddr& addr) const;
  std::optional<DevAddr> dev_addr_of(const DevEui& eui) const;
  const WorldState& world_state() const { return world_state_; }

 private:
  void index(const Block& block);

  LedgerKind kind_;
  std::vector<Block> blocks_;
  WorldState world_state_;
  std::map<DevEui, DevAddr> eui_index_;
  std::unique_ptr<std::shared_mutex> mutex_;
};

/// Outcome of validating a whole chain.
struct ChainCheck {
  bool ok = true;
  std::uint64_t failed_at = 0;
  std::string reason;
};

ChainCheck validate_chain(std::span<const Block> blocks, const KeyDirectory& directory,
                          LedgerKind kind);

// Chain interchange format:
//   "HLRA" | version u16 | kind u8 | { u32 length | serialized block }*
inline constexpr std::uint16_t kChainFormatVersion = 1;

Bytes encode_chain(const Ledger& ledger);
/// Parses and fully validates. Throws DecodeError on format errors and
/// ChainError on validation failure.
Ledger decode_chain(ByteView data, const KeyDirectory& directory);

class ChainError : public Error {
 public:
  using Error::Error;
};

void dump_chain(const Ledger& ledger, const std::string& path);
Ledger load_chain(const std::string& path, const KeyDirectory& directory);
/// Reads only the kind byte of a dump.
LedgerKind peek_chain_kind(ByteView data);

// Key directory file:
//   "HLRK" | version u16 | count u32 | { u16 id | u8 role | u16 public key }*
Bytes encode_directory(const KeyDirectory& directory);
/// Throws DecodeError.
KeyDirectory decode_directory(ByteView data);

}  // namespace hyperlora::ledger
