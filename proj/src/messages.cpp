#include "hyperlora/messages.hpp"

namespace hyperlora::msg {

namespace {

std::size_t tx_size(const ledger::Transaction& tx) {
  ByteWriter w;
  tx.encode(w);
  return w.size();
}

struct Sizer {
  std::size_t operator()(const AirFrame& m) const { return m.bytes.size(); }
  // tag | rx_handle u32 | u16 len | frame
  std::size_t operator()(const ForwardedFrame& m) const { return 1 + 4 + 2 + m.frame.size(); }
  // tag | DevAddr | FCnt | FPort | u8 len | payload
  std::size_t operator()(const UplinkNotice& m) const { return 1 + 4 + 2 + 1 + 1 + m.payload.bytes.size(); }
  std::size_t operator()(const DownlinkData& m) const { return 1 + 4 + 2 + 1 + 1 + m.payload.bytes.size(); }
  std::size_t operator()(const DownlinkFrame& m) const { return 1 + 4 + 2 + m.frame.size(); }
  // tag | kind | tx
  std::size_t operator()(const SubmitTx& m) const { return 2 + tx_size(m.tx); }
  // tag | kind | purpose | u32 len | block
  std::size_t operator()(const BlockMsg& m) const { return 3 + 4 + m.encoded_size; }
  // tag | kind | hash | verdict | u16 id | id | u16 sig | sig
  std::size_t operator()(const VoteMsg& m) const {
    return 2 + crypto::kDigestSize + 1 + 2 + m.voter.size() + 2 + m.signature.size();
  }
  std::size_t operator()(const CommitMsg&) const { return 2 + crypto::kDigestSize; }
  std::size_t operator()(const SyncRequest&) const { return 2 + 8; }
  std::size_t operator()(const SyncResponse& m) const { return 2 + 4 + m.encoded_size; }
};

}  // namespace

std::size_t wire_size(const Message& m) { return std::visit(Sizer{}, m); }

BlockMsg make_block_msg(ledger::LedgerKind kind, BlockPurpose purpose,
                        std::shared_ptr<const ledger::Block> block) {
  BlockMsg m{kind, purpose, std::move(block), 0};
  m.encoded_size = m.block->serialize().size();
  return m;
}

const char* name_of(const Message& m) {
  static constexpr const char* kNames[] = {"AirFrame",    "ForwardedFrame", "UplinkNotice",
                                           "DownlinkData", "DownlinkFrame", "SubmitTx",
                                           "BlockMsg",    "VoteMsg",        "CommitMsg",
                                           "SyncRequest", "SyncResponse"};
  return kNames[m.index()];
}

}  // namespace hyperlora::msg
