#pragma once

// Fixtures shared by the unit suites and the acceptance binary.

#include <functional>
#include <vector>

#include "hyperlora/consensus.hpp"
#include "hyperlora/ledger.hpp"

namespace hyperlora::testing {

/// Independent Merkle reference: split at the largest power of two below R.
/// Pairing level by level with an odd node carried up builds the same tree.
inline crypto::Digest merkle_oracle(std::span<const crypto::Digest> leaves) {
  if (leaves.size() == 1) return leaves[0];
  std::size_t k = 1;
  while (k * 2 < leaves.size()) k *= 2;
  auto left = merkle_oracle(leaves.first(k));
  auto right = merkle_oracle(leaves.subspan(k));
  return crypto::hash(concat({left.view(), right.view()}));
}

struct Cast {
  crypto::KeyPair orderer = crypto::generate_keypair("orderer", 1);
  std::vector<crypto::KeyPair> gateways;
  std::vector<crypto::KeyPair> servers;
  ledger::KeyDirectory directory;

  Cast() {
    directory.add(orderer, ledger::Role::orderer);
    for (int i = 0; i < 4; ++i) {
      gateways.push_back(crypto::generate_keypair("gateway-" + std::to_string(i), 1));
      directory.add(gateways.back(), ledger::Role::gateway);
    }
    for (int i = 0; i < 2; ++i) {
      servers.push_back(crypto::generate_keypair("server-" + std::to_string(i), 1));
      directory.add(servers.back(), ledger::Role::server);
    }
  }
};

inline ledger::SessionContext random_context(crypto::Rng& rng, std::uint32_t dev_addr) {
  ledger::SessionContext c;
  crypto::fill_random(rng, c.dev_eui);
  c.app_key = crypto::SymmetricKey::random(rng);
  c.dev_addr = dev_addr_from(dev_addr);
  c.nwk_s_key = crypto::SymmetricKey::random(rng);
  crypto::fill_random(rng, c.dev_nonce);
  crypto::fill_random(rng, c.app_nonce);
  return c;
}

/// A network ledger of `blocks` blocks with 1..4 context transactions each.
inline ledger::Ledger network_chain(const Cast& cast, std::size_t blocks, std::uint64_t seed) {
  crypto::Rng rng(seed);
  ledger::Ledger chain(ledger::LedgerKind::network);
  std::uint32_t addr = 1;
  for (std::size_t b = 0; b < blocks; ++b) {
    std::vector<ledger::Transaction> txs;
    auto n = 1 + rng() % 4;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& gw = cast.gateways[rng() % cast.gateways.size()];
      txs.push_back(ledger::make_network_tx(gw, random_context(rng, addr++), 1000 * b + i, rng));
    }
    auto block = ledger::assemble_block(std::move(txs), chain.height(), 1000 * b, chain.tip(),
                                        cast.orderer, ledger::LedgerKind::network);
    if (chain.append(std::move(block), cast.directory) != ledger::BlockCheck::ok)
      throw Error("fixture chain rejected");
  }
  return chain;
}

/// Reference rule by enumeration: commit once valid >= 2p+1, fail once no
/// completion of the outstanding votes can reach that.
inline consensus::RoundState enumerate_outcome(std::size_t valid, std::size_t cast, std::size_t n,
                                               int p) {
  auto need = static_cast<std::size_t>(2 * p + 1);
  if (valid >= need) return consensus::RoundState::committed;
  std::size_t outstanding = n - cast;
  for (std::uint32_t mask = 0; mask < (1u << outstanding); ++mask)
    if (valid + static_cast<std::size_t>(__builtin_popcount(mask)) >= need)
      return consensus::RoundState::pending;
  return consensus::RoundState::failed;
}

/// Disagreements between consensus::decide and the enumerator over every
/// verdict assignment (valid, invalid, absent) for n <= max_n, p <= max_p.
inline std::size_t threshold_mismatches(std::size_t max_n, int max_p, std::size_t* cases = nullptr) {
  std::size_t bad = 0, total = 0;
  for (std::size_t n = 1; n <= max_n; ++n)
    for (int p = 0; p <= max_p; ++p) {
      std::size_t combos = 1;
      for (std::size_t i = 0; i < n; ++i) combos *= 3;
      for (std::size_t c = 0; c < combos; ++c) {
        std::size_t valid = 0, cast = 0, x = c;
        for (std::size_t i = 0; i < n; ++i, x /= 3) {
          if (x % 3 == 1) ++valid;
          if (x % 3 != 0) ++cast;
        }
        ++total;
        if (consensus::decide(valid, cast, n, p) != enumerate_outcome(valid, cast, n, p)) ++bad;
      }
    }
  if (cases) *cases = total;
  return bad;
}

/// Unsigned stand-in transaction; the orderer only looks at the digest.
inline ledger::Transaction dummy_tx(std::uint64_t serial) {
  ledger::Transaction tx;
  tx.requester = "gateway-0";
  tx.t = static_cast<ledger::Timestamp>(serial);
  ByteWriter w;
  w.u64(serial);
  tx.data = std::move(w).take();
  tx.h = Bytes(64, 0);
  for (int i = 0; i < 8; ++i) tx.h[i] = static_cast<std::uint8_t>(serial >> (8 * i));
  return tx;
}

struct BatchTraceReport {
  std::size_t batches = 0;
  std::size_t txs = 0;
  std::vector<std::string> violations;
};

/// Feeds a random arrival trace to a SoloOrderer, firing the timer whenever
/// its deadline passes, and checks every batch against the cutting contract.
/// At equal instants the timer fires before the arrival.
inline BatchTraceReport run_batch_trace(std::uint64_t seed, const consensus::BatchConfig& cfg) {
  crypto::Rng rng(seed);
  consensus::SoloOrderer orderer(cfg);
  std::vector<SimTime> arrivals;
  SimTime t = 0;
  auto n = 1 + rng() % 600;
  for (std::size_t i = 0; i < n; ++i) {
    switch (rng() % 4) {
      case 0: break;
      case 1: t += static_cast<SimTime>(rng() % 20) * kMillisecond; break;
      case 2: t += static_cast<SimTime>(rng() % 1000) * kMillisecond; break;
      default: t += static_cast<SimTime>(rng() % 5000) * kMillisecond; break;
    }
    arrivals.push_back(t);
  }

  BatchTraceReport rep;
  std::vector<std::uint64_t> emitted;
  std::vector<std::pair<consensus::Batch, std::vector<SimTime>>> batches;
  std::vector<SimTime> open_times;
  auto take = [&](std::optional<consensus::Batch> b) {
    if (!b) return;
    batches.emplace_back(std::move(*b), open_times);
    open_times.clear();
  };
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    while (auto d = orderer.deadline()) {
      if (*d > arrivals[i]) break;
      take(orderer.on_timer(*d));
    }
    open_times.push_back(arrivals[i]);
    take(orderer.submit(dummy_tx(i), arrivals[i]));
  }
  if (auto d = orderer.deadline()) {
    if (orderer.on_timer(*d - 1)) rep.violations.push_back("cut before deadline");
    take(orderer.on_timer(*d));
  }
  if (orderer.pending() != 0) rep.violations.push_back("transactions left pending");

  for (const auto& [b, times] : batches) {
    ++rep.batches;
    rep.txs += b.txs.size();
    for (const auto& tx : b.txs) emitted.push_back(static_cast<std::uint64_t>(tx.t));
    if (b.txs.empty()) rep.violations.push_back("empty batch");
    if (b.txs.size() > cfg.max_message_count) rep.violations.push_back("oversized batch");
    if (b.reason == consensus::CutReason::count) {
      if (b.txs.size() != cfg.max_message_count) rep.violations.push_back("count cut below max");
      if (b.cut_at != times.back()) rep.violations.push_back("count cut not at last arrival");
    } else {
      if (b.cut_at != times.front() + cfg.batch_timeout) rep.violations.push_back("timeout cut off-deadline");
      if (times.back() >= b.cut_at) rep.violations.push_back("tx arrived after its timeout cut");
    }
  }
  for (std::size_t i = 0; i < emitted.size(); ++i)
    if (emitted[i] != i) {
      rep.violations.push_back("order or membership changed");
      break;
    }
  if (emitted.size() != arrivals.size()) rep.violations.push_back("transactions lost");
  return rep;
}

}  // namespace hyperlora::testing
