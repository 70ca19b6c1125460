#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "hyperlora/ledger.hpp"

namespace hyperlora::consensus {

using ledger::Transaction;

/// Batch-cutting parameters of the ordering service.
struct BatchConfig {
  SimTime batch_timeout = 2 * kSecond;
  std::size_t max_message_count = 200;

  /// Throws ArgumentError unless timeout > 0 and max_message_count >= 1.
  void validate() const;
};

enum class Mode { solo, pbft };

struct ConsensusConfig {
  Mode mode = Mode::solo;
  BatchConfig batch;
  int p = 1;
  SimTime retry_backoff = 2 * kSecond;
};

class RejectedDuplicate : public Error {
 public:
  using Error::Error;
};

enum class CutReason { count, timeout };

struct Batch {
  std::vector<Transaction> txs;
  CutReason reason = CutReason::count;
  SimTime cut_at = 0;
};

/// Single-node sequencer. Keeps arrival order and cuts a batch when it holds
/// max_message_count transactions or when batch_timeout has elapsed since the
/// first transaction of the batch arrived. Empty batches are never cut.
class SoloOrderer {
 public:
  explicit SoloOrderer(BatchConfig config);

  /// Throws RejectedDuplicate if a transaction with the same h is pending.
  std::optional<Batch> submit(Transaction tx, SimTime now);
  std::optional<Batch> on_timer(SimTime now);

  std::size_t pending() const { return pending_.size(); }
  /// When the current batch times out, if one is open.
  std::optional<SimTime> deadline() const;
  const BatchConfig& config() const { return config_; }

 private:
  Batch cut(CutReason reason, SimTime now);

  BatchConfig config_;
  std::vector<Transaction> pending_;
  std::set<crypto::Digest> pending_digests_;
  SimTime batch_start_ = 0;
};

enum class Verdict : std::uint8_t { invalid = 0, valid = 1 };
enum class RoundState { pending, committed, failed };

const char* to_string(RoundState s);

class VoteRejected : public Error {
 public:
  using Error::Error;
};

/// Bytes a voter signs: "HLRA-vote" || block hash || verdict.
Bytes vote_message(const crypto::Digest& block_hash, Verdict verdict);
Bytes sign_vote(const crypto::KeyPair& voter, const crypto::Digest& block_hash, Verdict verdict);

/// Commit threshold for at most p faulty voters: 2p + 1 matching valid votes.
constexpr std::size_t commit_threshold(int p) { return static_cast<std::size_t>(2 * p + 1); }

/// Pure decision rule: committed once valid >= 2p+1, failed once the votes
/// still outstanding can no longer get there.
RoundState decide(std::size_t valid_votes, std::size_t votes_cast, std::size_t voters, int p);

/// Collects signed verdicts on one proposed block.
class VoteRound {
 public:
  VoteRound(crypto::Digest block_hash, std::vector<EntityId> voters, int p);

  enum class Recorded { recorded, ignored_revote };

  /// Throws VoteRejected for non-voters and bad signatures.
  Recorded collect_vote(const EntityId& voter, Verdict verdict, ByteView signature,
                        const ledger::KeyDirectory& directory);
  RoundState check_consensus() const;

  const crypto::Digest& block_hash() const { return block_hash_; }
  std::size_t valid_votes() const;
  std::size_t votes_cast() const { return votes_.size(); }
  int p() const { return p_; }

 private:
  crypto::Digest block_hash_;
  std::set<EntityId> voters_;
  int p_;
  std::map<EntityId, Verdict> votes_;
};

}  // namespace hyperlora::consensus
