#pragma once

// Deterministic discrete-event engine.
//
// Events are totally ordered by (fire_at, seq); seq is a global counter, so
// events scheduled for the same instant fire in scheduling order. The engine
// owns one seeded RNG used for link latency and loss draws. Given the same
// seed and the same sequence of calls, the event trace is identical.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <unordered_set>
#include <variant>
#include <vector>

#include "hyperlora/bytes.hpp"
#include "hyperlora/ids.hpp"

namespace hyperlora::sim {

using NodeId = std::uint32_t;
using EventId = std::uint64_t;
using TimerToken = std::uint64_t;

class CausalityError : public Error {
 public:
  using Error::Error;
};

enum class LinkClass : std::uint8_t { lora_air, backhaul };

const char* to_string(LinkClass c);

/// Latency is drawn uniformly from [min, max]; min == max is a fixed latency.
struct LatencyModel {
  SimTime min = 0;
  SimTime max = 0;

  static LatencyModel fixed(SimTime t) { return {t, t}; }
  static LatencyModel uniform(SimTime lo, SimTime hi) { return {lo, hi}; }
};

/// One direction of a point-to-point link.
struct Link {
  NodeId from = 0;
  NodeId to = 0;
  LinkClass link_class = LinkClass::backhaul;
  LatencyModel latency;
  double loss_rate = 0.0;

  std::uint64_t offered_bytes = 0;
  std::uint64_t offered_msgs = 0;
  std::uint64_t delivered_msgs = 0;
  std::uint64_t lost_msgs = 0;
};

/// Incremental FNV-1a over the event trace, used for determinism checks.
class TraceHash {
 public:
  void mix(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (v >> (8 * i)) & 0xff;
      state_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Payload must be copyable and have an ADL-visible
/// `std::size_t wire_size(const Payload&)`.
template <class Payload>
class Engine {
 public:
  struct Event {
    SimTime fire_at = 0;
    SimTime created_at = 0;
    EventId seq = 0;
    NodeId target = 0;
    NodeId from = 0;
    std::variant<Payload, TimerToken> body;
  };

  using Handler = std::function<void(const Event&)>;

  explicit Engine(std::uint64_t seed) : rng_(seed) {}

  SimTime now() const { return now_; }
  std::mt19937_64& rng() { return rng_; }

  /// Attaches a handler; events for unregistered targets are dropped.
  void register_node(NodeId id, Handler handler) { handlers_[id] = std::move(handler); }

  /// Schedules delivery of a message at now + delay. Throws CausalityError
  /// when delay < 0.
  EventId schedule(SimTime delay, NodeId target, Payload payload, NodeId from = 0) {
    return schedule_at(now_ + check_delay(delay), target, std::move(payload), from);
  }

  EventId schedule_timer(SimTime delay, NodeId target, TimerToken token) {
    return push(now_ + check_delay(delay), target, target, token);
  }

  /// Throws CausalityError when at < now.
  EventId schedule_at(SimTime at, NodeId target, Payload payload, NodeId from = 0) {
    return push(at, target, from, std::move(payload));
  }

  void cancel(EventId id) { cancelled_.insert(id); }

  Link& add_link(NodeId from, NodeId to, LinkClass cls, LatencyModel latency, double loss_rate = 0.0) {
    if (loss_rate < 0.0 || loss_rate > 1.0) throw ArgumentError("loss_rate outside [0,1]");
    if (latency.min < 0 || latency.max < latency.min) throw ArgumentError("bad latency range");
    Link& l = links_[{from, to}];
    l = Link{from, to, cls, latency, loss_rate};
    return l;
  }

  bool has_link(NodeId from, NodeId to) const { return links_.count({from, to}) != 0; }
  Link& link(NodeId from, NodeId to) {
    auto it = links_.find({from, to});
    if (it == links_.end())
      throw ArgumentError("no link " + std::to_string(from) + "->" + std::to_string(to));
    return it->second;
  }
  const std::map<std::pair<NodeId, NodeId>, Link>& links() const { return links_; }

  /// Offers a message to the link from -> to. The bytes are always counted;
  /// the message is then either lost or delivered after extra_delay plus a
  /// latency draw. Returns the delivery event, or nullopt when lost.
  std::optional<EventId> send(NodeId from, NodeId to, Payload payload, SimTime extra_delay = 0) {
    Link& l = link(from, to);
    l.offered_bytes += wire_size(payload);
    ++l.offered_msgs;
    if (l.loss_rate > 0.0) {
      bool lost = l.loss_rate >= 1.0 || std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < l.loss_rate;
      if (lost) {
        ++l.lost_msgs;
        return std::nullopt;
      }
    }
    ++l.delivered_msgs;
    SimTime latency = l.latency.min;
    if (l.latency.max > l.latency.min)
      latency = std::uniform_int_distribution<SimTime>(l.latency.min, l.latency.max)(rng_);
    return schedule(check_delay(extra_delay) + latency, to, std::move(payload), from);
  }

  /// Processes every event with fire_at <= t_end in order, then advances the
  /// clock to t_end.
  void run_until(SimTime t_end) {
    if (t_end < now_) throw CausalityError("run_until: t_end is in the past");
    while (!queue_.empty() && queue_.top().fire_at <= t_end) {
      Event ev = queue_.top();
      queue_.pop();
      if (cancelled_.erase(ev.seq)) continue;
      now_ = ev.fire_at;
      ++processed_;
      trace_.mix(static_cast<std::uint64_t>(ev.fire_at));
      trace_.mix(ev.seq);
      trace_.mix(ev.target);
      trace_.mix(ev.body.index());
      auto it = handlers_.find(ev.target);
      if (it != handlers_.end()) it->second(ev);
    }
    now_ = t_end;
  }

  std::size_t queued() const { return queue_.size(); }
  std::uint64_t processed() const { return processed_; }
  std::uint64_t trace_digest() const { return trace_.value(); }

 private:
  SimTime check_delay(SimTime d) const {
    if (d < 0) throw CausalityError("negative delay");
    return d;
  }

  EventId push(SimTime at, NodeId target, NodeId from, std::variant<Payload, TimerToken> body) {
    if (at < now_) throw CausalityError("event scheduled before current time");
    EventId id = next_seq_++;
    queue_.push(Event{at, now_, id, target, from, std::move(body)});
    return id;
  }

  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.fire_at != b.fire_at ? a.fire_at > b.fire_at : a.seq > b.seq;
    }
  };

  SimTime now_ = 0;
  EventId next_seq_ = 0;
  std::uint64_t processed_ = 0;
  std::mt19937_64 rng_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::unordered_set<EventId> cancelled_;
  std::map<NodeId, Handler> handlers_;
  std::map<std::pair<NodeId, NodeId>, Link> links_;
  TraceHash trace_;
};

}  // namespace hyperlora::sim
