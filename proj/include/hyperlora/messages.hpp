#pragma once

// Messages exchanged between simulated nodes. Every backhaul message starts
// with a one-byte type tag; wire_size() is the encoded size used for link
// byte accounting (layouts in docs/wire.md).

#include <memory>
#include <variant>

#include "hyperlora/consensus.hpp"
#include "hyperlora/ledger.hpp"
#include "hyperlora/lora.hpp"
#include "hyperlora/simnet.hpp"

namespace hyperlora::msg {

using sim::NodeId;

/// Raw LoRa frame on the air interface.
struct AirFrame {
  Bytes bytes;
};

/// Traditional mode: the gateway hands the whole frame to the cloud, tagged
/// with the radio reception handle so replies can be routed back.
struct ForwardedFrame {
  NodeId rx_handle = 0;
  Bytes frame;
};

/// Edge mode: what a gateway sends upstream for a MIC-valid uplink.
struct UplinkNotice {
  DevAddr dev_addr{};
  std::uint16_t fcnt = 0;
  std::uint8_t fport = 0;
  lora::AppCiphertext payload;
};

/// Edge mode downlink: encrypted application data only.
struct DownlinkData {
  DevAddr dev_addr{};
  std::uint16_t fcnt_down = 0;
  std::uint8_t fport = 0;
  lora::AppCiphertext payload;
};

/// Traditional mode downlink: a complete frame for the gateway to transmit.
struct DownlinkFrame {
  NodeId rx_handle = 0;
  Bytes frame;
};

struct SubmitTx {
  ledger::LedgerKind kind = ledger::LedgerKind::network;
  ledger::Transaction tx;
};

enum class BlockPurpose : std::uint8_t { deliver, propose };

struct BlockMsg {
  ledger::LedgerKind kind = ledger::LedgerKind::network;
  BlockPurpose purpose = BlockPurpose::deliver;
  std::shared_ptr<const ledger::Block> block;
  std::size_t encoded_size = 0;
};

struct VoteMsg {
  ledger::LedgerKind kind = ledger::LedgerKind::network;
  crypto::Digest block_hash;
  consensus::Verdict verdict = consensus::Verdict::valid;
  EntityId voter;
  Bytes signature;
};

struct CommitMsg {
  ledger::LedgerKind kind = ledger::LedgerKind::network;
  crypto::Digest block_hash;
};

struct SyncRequest {
  ledger::LedgerKind kind = ledger::LedgerKind::network;
  std::uint64_t from_height = 0;
};

struct SyncResponse {
  ledger::LedgerKind kind = ledger::LedgerKind::network;
  std::vector<std::shared_ptr<const ledger::Block>> blocks;
  std::size_t encoded_size = 0;
};

using Message = std::variant<AirFrame, ForwardedFrame, UplinkNotice, DownlinkData, DownlinkFrame,
                             SubmitTx, BlockMsg, VoteMsg, CommitMsg, SyncRequest, SyncResponse>;

std::size_t wire_size(const Message& m);

BlockMsg make_block_msg(ledger::LedgerKind kind, BlockPurpose purpose,
                        std::shared_ptr<const ledger::Block> block);

const char* name_of(const Message& m);

}  // namespace hyperlora::msg
