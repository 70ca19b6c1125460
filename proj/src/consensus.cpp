#include "hyperlora/consensus.hpp"

namespace hyperlora::consensus {

void BatchConfig::validate() const {
  if (batch_timeout <= 0) throw ArgumentError("batch_timeout must be positive");
  if (max_message_count < 1) throw ArgumentError("max_message_count must be at least 1");
}

SoloOrderer::SoloOrderer(BatchConfig config) : config_(config) { config_.validate(); }

std::optional<Batch> SoloOrderer::submit(Transaction tx, SimTime now) {
  auto digest = tx.leaf();
  if (pending_digests_.count(digest)) throw RejectedDuplicate("transaction already in batch");
  if (pending_.empty()) batch_start_ = now;
  pending_digests_.insert(digest);
  pending_.push_back(std::move(tx));
  if (pending_.size() >= config_.max_message_count) return cut(CutReason::count, now);
  return std::nullopt;
}

std::optional<Batch> SoloOrderer::on_timer(SimTime now) {
  if (pending_.empty() || now - batch_start_ < config_.batch_timeout) return std::nullopt;
  return cut(CutReason::timeout, now);
}

std::optional<SimTime> SoloOrderer::deadline() const {
  if (pending_.empty()) return std::nullopt;
  return batch_start_ + config_.batch_timeout;
}

Batch SoloOrderer::cut(CutReason reason, SimTime now) {
  Batch b{std::move(pending_), reason, now};
  pending_.clear();
  pending_digests_.clear();
  return b;
}

const char* to_string(RoundState s) {
  switch (s) {
    case RoundState::pending: return "pending";
    case RoundState::committed: return "committed";
    case RoundState::failed: return "failed";
  }
  return "?";
}

Bytes vote_message(const crypto::Digest& block_hash, Verdict verdict) {
  ByteWriter w;
  w.raw(as_bytes("HLRA-vote"));
  w.raw(block_hash.view());
  w.u8(static_cast<std::uint8_t>(verdict));
  return std::move(w).take();
}

Bytes sign_vote(const crypto::KeyPair& voter, const crypto::Digest& block_hash, Verdict verdict) {
  return crypto::sign(voter.private_key, vote_message(block_hash, verdict));
}

RoundState decide(std::size_t valid_votes, std::size_t votes_cast, std::size_t voters, int p) {
  auto need = commit_threshold(p);
  if (valid_votes >= need) return RoundState::committed;
  auto outstanding = voters > votes_cast ? voters - votes_cast : 0;
  if (valid_votes + outstanding < need) return RoundState::failed;
  return RoundState::pending;
}

VoteRound::VoteRound(crypto::Digest block_hash, std::vector<EntityId> voters, int p)
    : block_hash_(block_hash), voters_(voters.begin(), voters.end()), p_(p) {
  if (p < 0) throw ArgumentError("p must be non-negative");
}

VoteRound::Recorded VoteRound::collect_vote(const EntityId& voter, Verdict verdict,
                                            ByteView signature,
                                            const ledger::KeyDirectory& directory) {
  if (!voters_.count(voter)) throw VoteRejected("'" + voter + "' is not a voter in this round");
  if (!crypto::verify(directory.public_key_of(voter), vote_message(block_hash_, verdict), signature))
    throw VoteRejected("bad vote signature from '" + voter + "'");
  if (votes_.count(voter)) return Recorded::ignored_revote;
  votes_.emplace(voter, verdict);
  return Recorded::recorded;
}

std::size_t VoteRound::valid_votes() const {
  std::size_t n = 0;
  for (const auto& [_, v] : votes_) n += v == Verdict::valid;
  return n;
}

RoundState VoteRound::check_consensus() const {
  return decide(valid_votes(), votes_.size(), voters_.size(), p_);
}

}  // namespace hyperlora::consensus
