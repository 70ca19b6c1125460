#pragma once

// State machines for end-devices, LoRa gateways, network servers and the
// per-channel ordering nodes.
//
// In the edge topology gateways run the join server (JS) and the network
// connector (NC) and hold a replica of the network ledger; servers only see
// encrypted application payloads. In the traditional topology gateways are
// transparent forwarders and the servers run JS and NC themselves.

#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>

#include "hyperlora/consensus.hpp"
#include "hyperlora/ledger.hpp"
#include "hyperlora/lora.hpp"
#include "hyperlora/messages.hpp"
#include "hyperlora/simnet.hpp"

namespace hyperlora::nodes {

using Engine = sim::Engine<msg::Message>;
using sim::NodeId;
using sim::TimerToken;

enum class Topology { edge, traditional };
const char* to_string(Topology t);

// ---------------------------------------------------------------------------
// Accounting

/// Work-unit proxy for CPU load: parse 1, MIC 2, context query 1, tx build 3.
enum class WorkKind { parse, mic, query, tx_build };
int work_units(WorkKind k);

struct WorkCounters {
  std::uint64_t parse = 0;
  std::uint64_t mic = 0;
  std::uint64_t query = 0;
  std::uint64_t tx_build = 0;
  std::uint64_t units() const;
};

enum class RequestKind { join, uplink };
enum class RequestStatus { in_flight, completed, failed };
const char* to_string(RequestKind k);
const char* to_string(RequestStatus s);

struct RequestRecord {
  RequestKind kind = RequestKind::join;
  std::uint32_t device = 0;
  SimTime issued = 0;
  SimTime ended = -1;
  RequestStatus status = RequestStatus::in_flight;
};

/// Per-request lifecycle log written by devices.
class MetricsSink {
 public:
  using RequestId = std::size_t;
  RequestId issue(RequestKind kind, std::uint32_t device, SimTime now);
  void complete(RequestId id, SimTime now);
  void fail(RequestId id, SimTime now);
  const std::vector<RequestRecord>& requests() const { return requests_; }

 private:
  std::vector<RequestRecord> requests_;
};

/// Why frames were discarded by a JS or NC.
struct DropCounters {
  std::uint64_t malformed = 0;
  std::uint64_t unknown_device = 0;
  std::uint64_t undecryptable = 0;
  std::uint64_t bad_mic = 0;
  std::uint64_t replay = 0;
  std::uint64_t stale_fcnt = 0;
  std::uint64_t downlink_dropped = 0;
  std::uint64_t total() const;
};

/// Shared state of one simulated world handed to every node.
struct Environment {
  Engine* engine = nullptr;
  const ledger::KeyDirectory* directory = nullptr;
  MetricsSink* metrics = nullptr;
  NetId net_id{0x00, 0x00, 0x13};
  Topology topology = Topology::edge;
  /// Optional service-rate cap; 0 means processing takes no simulated time.
  SimTime us_per_work_unit = 0;
};

// ---------------------------------------------------------------------------
// Node base

class Node {
 public:
  Node(NodeId id, std::string name, Environment& env);
  virtual ~Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  NodeId id() const { return id_; }
  const std::string& name() const { return name_; }
  const WorkCounters& work() const { return work_; }
  std::uint64_t messages_received() const { return received_; }

  void dispatch(const Engine::Event& ev);
  /// Records work and, with a service-rate cap, delays subsequent sends.
  void charge(WorkKind kind);
  void send(NodeId to, msg::Message m, SimTime extra_delay = 0);

 protected:
  virtual void on_message(NodeId from, const msg::Message& m) = 0;
  virtual void on_timer(TimerToken) {}

  SimTime now() const { return env_.engine->now(); }
  sim::EventId set_timer(SimTime delay, TimerToken token);
  void cancel_timer(sim::EventId id) { env_.engine->cancel(id); }

  Environment& env_;

 private:
  NodeId id_;
  std::string name_;
  WorkCounters work_;
  std::uint64_t received_ = 0;
  SimTime busy_until_ = 0;
};

// ---------------------------------------------------------------------------
// Ledger replica

/// One node's copy of a channel ledger, with block delivery, PBFT voting and
/// catch-up sync.
class Replica {
 public:
  using SendFn = std::function<void(NodeId, msg::Message)>;
  using CommitFn = std::function<void(const ledger::Block&)>;

  Replica(ledger::LedgerKind kind, NodeId orderer, const crypto::KeyPair& keys,
          const ledger::KeyDirectory& directory, SendFn send);

  ledger::Ledger& ledger() { return ledger_; }
  const ledger::Ledger& ledger() const { return ledger_; }
  std::uint64_t height() const { return ledger_.height(); }

  /// Returns false if the message is not a ledger message of this channel.
  bool handle(NodeId from, const msg::Message& m);

  /// Drops every local block (replica loss).
  void wipe();
  void request_sync(NodeId peer);
  void on_commit(CommitFn fn) { on_commit_ = std::move(fn); }
  /// Test hook: this replica votes invalid on every proposal.
  void set_byzantine(bool b) { byzantine_ = b; }

  std::uint64_t rejected_blocks() const { return rejected_; }

 private:
  void deliver(const std::shared_ptr<const ledger::Block>& block, NodeId from);
  void drain_buffer();

  ledger::LedgerKind kind_;
  NodeId orderer_;
  const crypto::KeyPair& keys_;
  const ledger::KeyDirectory& directory_;
  SendFn send_;
  CommitFn on_commit_;
  ledger::Ledger ledger_;
  std::map<crypto::Digest, std::shared_ptr<const ledger::Block>> proposals_;
  std::map<std::uint64_t, std::shared_ptr<const ledger::Block>> buffered_;
  std::uint64_t rejected_ = 0;
  bool byzantine_ = false;
  bool sync_outstanding_ = false;
};

// ---------------------------------------------------------------------------
// Join server and network connector (hosted by gateways or servers)

/// OTAA join handling: device registry, DevNonce replay protection, DevAddr
/// allocation and context generation.
class JoinServer {
 public:
  JoinServer(const crypto::KeyPair& owner, std::uint8_t addr_prefix, NetId net_id,
             std::uint64_t seed);

  void register_device(const DevEui& eui, const crypto::SymmetricKey& app_key);
  bool knows(const DevEui& eui) const { return registry_.count(eui) != 0; }

  enum class Status { accepted, unknown_device, bad_mic, replayed_nonce };
  struct Outcome {
    Status status = Status::unknown_device;
    ledger::SessionContext context;
    crypto::SymmetricKey app_s_key;
    Bytes accept_wire;
    ledger::Transaction tx;
  };

  /// Charges MIC and tx-build work to host. n_ledger may be null.
  Outcome handle_join(Node& host, const lora::JoinRequestFrame& req, const ledger::Ledger* n_ledger,
                      ledger::Timestamp t);

 private:
  DevAddr allocate(const DevEui& eui, const ledger::Ledger* n_ledger);

  const crypto::KeyPair& owner_;
  std::uint8_t prefix_;
  NetId net_id_;
  crypto::Rng rng_;
  std::map<DevEui, crypto::SymmetricKey> registry_;
  std::map<DevEui, std::set<std::uint16_t>> used_nonces_;
  std::map<DevEui, DevAddr> assigned_;
  std::uint32_t next_addr_ = 1;
};

/// Uplink/downlink frame processing against contexts held on the network
/// ledger. Contexts are decrypted with the host's key ring.
class NetworkConnector {
 public:
  explicit NetworkConnector(const crypto::KeyPair& own);

  /// Key handover: adds another entity's private key to the ring.
  void import_key(const crypto::KeyPair& kp) { ring_.push_back(kp); }
  /// Context created locally and not yet committed.
  void remember_pending(const ledger::SessionContext& ctx, ledger::Timestamp t);

  std::optional<ledger::SessionContext> lookup(const DevAddr& addr, const ledger::Ledger& n_ledger,
                                               bool* undecryptable = nullptr);

  enum class Status { accepted, unknown_device, undecryptable, bad_mic, stale_fcnt };
  struct UplinkResult {
    Status status = Status::unknown_device;
    lora::DataFrame frame;
    ledger::SessionContext context;
  };

  /// Query (1), MIC (2); the caller has already charged the parse.
  UplinkResult process_uplink(Node& host, const lora::DataFrame& frame,
                              const ledger::Ledger& n_ledger);

  /// Zero-payload downlink acknowledging uplink fcnt. Charges one MIC.
  Bytes build_ack(Node& host, const ledger::SessionContext& ctx, std::uint16_t fcnt);

  /// Query (1), MIC (2). nullopt for unknown devices.
  std::optional<Bytes> build_downlink(Node& host, const DevAddr& addr, std::uint16_t fcnt_down,
                                      std::uint8_t fport, const lora::AppCiphertext& payload,
                                      const ledger::Ledger& n_ledger);

 private:
  struct Cached {
    std::uint64_t block = 0;
    ledger::Timestamp t = 0;
    ledger::SessionContext context;
  };

  std::vector<crypto::KeyPair> ring_;
  std::map<std::uint32_t, Cached> cache_;
  std::map<std::uint32_t, std::pair<ledger::Timestamp, ledger::SessionContext>> pending_;
  std::map<std::uint32_t, std::uint16_t> last_fcnt_;
};

/// Application ledger record: DevAddr | FCnt u16 | FPort | device ciphertext.
struct AppRecord {
  DevAddr dev_addr{};
  std::uint16_t fcnt = 0;
  std::uint8_t fport = 0;
  lora::AppCiphertext payload;

  Bytes encode() const;
  static AppRecord decode(ByteView data);
  auto operator<=>(const AppRecord& o) const {
    return std::tie(dev_addr, fcnt, fport, payload.bytes) <=>
           std::tie(o.dev_addr, o.fcnt, o.fport, o.payload.bytes);
  }
  bool operator==(const AppRecord&) const = default;
};

// ---------------------------------------------------------------------------
// End device

struct DeviceBehaviour {
  SimTime join_interval_min = 600 * kSecond;
  SimTime join_interval_max = 7200 * kSecond;
  SimTime join_timeout = 300 * kSecond;
  SimTime uplink_interval_min = 13 * kSecond;
  SimTime uplink_interval_max = 17 * kSecond;
  SimTime uplink_timeout = 30 * kSecond;
  std::size_t payload_bytes = 16;
  /// No new requests are issued at or after this time.
  SimTime stop_at = std::numeric_limits<SimTime>::max();
};

enum class DeviceMode { otaa, abp };
enum class DeviceState { idle, joining, joined };

struct Session {
  DevAddr dev_addr{};
  crypto::SymmetricKey nwk_s_key;
  crypto::SymmetricKey app_s_key;
  std::uint16_t fcnt_up = 0;
  std::optional<std::uint16_t> last_fcnt_down;
};

class EndDevice : public Node {
 public:
  EndDevice(NodeId id, std::string name, Environment& env, std::uint32_t index, DevEui dev_eui,
            AppEui app_eui, crypto::SymmetricKey app_key, NodeId gateway, std::uint64_t seed,
            DeviceBehaviour behaviour);

  std::uint32_t index() const { return index_; }
  const DevEui& dev_eui() const { return dev_eui_; }
  const crypto::SymmetricKey& app_key() const { return app_key_; }
  DeviceMode mode() const { return mode_; }
  DeviceState state() const { return state_; }
  const std::optional<Session>& session() const { return session_; }
  NodeId gateway() const { return gateway_; }
  void set_gateway(NodeId gw) { gateway_ = gw; }

  /// ABP or pre-joined device: session preset, no handshake.
  void set_session(Session s, DeviceMode mode);

  /// Repeated OTAA joins: first after first_delay, then every interval draw.
  void start_join_loop(SimTime first_delay);
  /// Periodic uplinks; only sent while a session exists.
  void start_uplink_loop(SimTime first_delay);
  void join_now();
  void uplink_now();
  /// Uplink with caller-supplied plaintext.
  void uplink_now(const lora::AppPlaintext& plain, std::uint8_t fport = 1);

  std::uint64_t joins_completed() const { return joins_completed_; }
  std::uint64_t uplinks_acked() const { return uplinks_acked_; }
  std::uint64_t frames_rejected() const { return frames_rejected_; }
  const std::vector<lora::AppPlaintext>& downlinks() const { return downlinks_; }
  const std::vector<lora::AppPlaintext>& sent_plaintexts() const { return sent_; }
  const std::set<std::uint16_t>& used_dev_nonces() const { return used_nonces_; }
  /// Last frame emitted on the air (tests).
  const Bytes& last_emitted() const { return last_emitted_; }

 protected:
  void on_message(NodeId from, const msg::Message& m) override;
  void on_timer(TimerToken token) override;

 private:
  enum TimerKind : std::uint64_t { kJoinDue = 1, kJoinTimeout = 2, kUplinkDue = 3, kUplinkTimeout = 4 };
  static TimerToken token(TimerKind k, std::uint64_t data) { return (std::uint64_t(k) << 32) | data; }

  SimTime draw(SimTime lo, SimTime hi);
  void emit(Bytes frame);
  void handle_join_accept(ByteView wire);
  void handle_downlink(ByteView wire);

  std::uint32_t index_;
  DevEui dev_eui_;
  AppEui app_eui_;
  crypto::SymmetricKey app_key_;
  NodeId gateway_;
  crypto::Rng rng_;
  DeviceBehaviour behaviour_;
  DeviceMode mode_ = DeviceMode::otaa;
  DeviceState state_ = DeviceState::idle;
  std::optional<Session> session_;

  struct PendingJoin {
    MetricsSink::RequestId request;
    DevNonce nonce;
    sim::EventId timeout;
    std::uint64_t attempt;
  };
  std::optional<PendingJoin> pending_join_;
  std::uint64_t join_attempts_ = 0;
  std::set<std::uint16_t> used_nonces_;

  struct PendingUplink {
    MetricsSink::RequestId request;
    sim::EventId timeout;
  };
  std::map<std::uint16_t, PendingUplink> pending_uplinks_;

  std::uint64_t joins_completed_ = 0;
  std::uint64_t uplinks_acked_ = 0;
  std::uint64_t frames_rejected_ = 0;
  std::vector<lora::AppPlaintext> downlinks_;
  std::vector<lora::AppPlaintext> sent_;
  Bytes last_emitted_;
};

// ---------------------------------------------------------------------------
// Gateway

class Gateway : public Node {
 public:
  Gateway(NodeId id, std::string name, Environment& env, crypto::KeyPair keys, std::uint8_t index,
          NodeId upstream_server, NodeId n_orderer, std::uint64_t seed);

  const crypto::KeyPair& keys() const { return keys_; }
  std::uint8_t index() const { return index_; }
  NodeId upstream() const { return upstream_; }

  void register_device(const DevEui& eui, const crypto::SymmetricKey& app_key);
  /// Extra processing time before a join accept leaves the gateway.
  void set_join_delay(SimTime d) { join_delay_ = d; }

  /// Network-ledger replica; absent in the traditional topology.
  Replica* network() { return network_ ? &*network_ : nullptr; }
  const Replica* network() const { return network_ ? &*network_ : nullptr; }

  /// Out-of-band copy of a failed gateway's private key.
  static void key_handover(const Gateway& failed, Gateway& replacement);

  const DropCounters& drops() const { return drops_; }
  std::uint64_t joins_accepted() const { return joins_accepted_; }
  std::uint64_t uplinks_forwarded() const { return uplinks_forwarded_; }

 protected:
  void on_message(NodeId from, const msg::Message& m) override;

 private:
  void handle_air_edge(NodeId device, const Bytes& bytes);

  crypto::KeyPair keys_;
  std::uint8_t index_;
  NodeId upstream_;
  NodeId n_orderer_;
  SimTime join_delay_ = 0;
  std::optional<Replica> network_;
  JoinServer js_;
  NetworkConnector nc_;
  std::map<std::uint32_t, NodeId> rx_handles_;
  DropCounters drops_;
  std::uint64_t joins_accepted_ = 0;
  std::uint64_t uplinks_forwarded_ = 0;
};

// ---------------------------------------------------------------------------
// Network server

class NetworkServer : public Node {
 public:
  NetworkServer(NodeId id, std::string name, Environment& env, crypto::KeyPair keys,
                std::uint8_t index, NodeId n_orderer, NodeId a_orderer, std::uint64_t seed);

  const crypto::KeyPair& keys() const { return keys_; }
  Replica& network() { return network_; }
  Replica& application() { return application_; }
  const Replica& network() const { return network_; }
  const Replica& application() const { return application_; }

  /// Traditional topology: the server hosts the join server.
  void register_device(const DevEui& eui, const crypto::SymmetricKey& app_key);

  enum class ProvisionResult { submitted, rejected_collision };
  /// ABP: operator-supplied context, encrypted to the entity that will serve
  /// the device (a gateway in edge mode, this server otherwise).
  ProvisionResult abp_provision(const ledger::SessionContext& context, ByteView serving_public_key);

  /// Sends already-encrypted application data towards a device. Queued until
  /// the server has seen the device through some gateway.
  void downlink(const DevAddr& addr, std::uint8_t fport, std::uint16_t fcnt_down,
                const lora::AppCiphertext& payload);

  const DropCounters& drops() const { return drops_; }
  std::uint64_t payloads_ingested() const { return ingested_; }

 protected:
  void on_message(NodeId from, const msg::Message& m) override;

 private:
  void ingest(const DevAddr& addr, std::uint16_t fcnt, std::uint8_t fport,
              const lora::AppCiphertext& payload);
  void handle_forwarded(NodeId gateway, const msg::ForwardedFrame& f);
  void flush_downlinks(const DevAddr& addr);

  crypto::KeyPair keys_;
  std::uint8_t index_;
  NodeId n_orderer_;
  NodeId a_orderer_;
  Replica network_;
  Replica application_;
  JoinServer js_;
  NetworkConnector nc_;
  crypto::Rng rng_;
  struct Route {
    NodeId gateway;
    NodeId rx_handle;
  };
  std::map<std::uint32_t, Route> routes_;
  struct QueuedDownlink {
    std::uint8_t fport;
    std::uint16_t fcnt_down;
    lora::AppCiphertext payload;
  };
  std::map<std::uint32_t, std::deque<QueuedDownlink>> downlink_queue_;
  DropCounters drops_;
  std::uint64_t ingested_ = 0;
};

// ---------------------------------------------------------------------------
// Ordering node

/// Per-channel orderer: solo batch cutting, block assembly and sealing, and
/// in PBFT mode collection of signed peer verdicts before commit.
class OrdererNode : public Node {
 public:
  struct Peer {
    NodeId node;
    EntityId entity;
  };

  OrdererNode(NodeId id, std::string name, Environment& env, crypto::KeyPair keys,
              ledger::LedgerKind kind, consensus::ConsensusConfig config, std::vector<Peer> peers);

  const crypto::KeyPair& keys() const { return keys_; }
  ledger::Ledger& ledger() { return ledger_; }
  const ledger::Ledger& ledger() const { return ledger_; }
  int effective_p() const { return p_; }

  std::uint64_t rounds_failed() const { return rounds_failed_; }
  std::uint64_t rejected_txs() const { return rejected_txs_; }
  struct BatchInfo {
    std::size_t size = 0;
    consensus::CutReason reason = consensus::CutReason::count;
    SimTime cut_at = 0;
  };
  const std::vector<BatchInfo>& batch_log() const { return batch_log_; }

 protected:
  void on_message(NodeId from, const msg::Message& m) override;
  void on_timer(TimerToken token) override;

 private:
  enum TimerKind : TimerToken { kBatchTimer = 1, kRetry = 2 };
  void accept_batch(consensus::Batch batch);
  void start_next();
  void propose();
  void commit_current();

  crypto::KeyPair keys_;
  ledger::LedgerKind kind_;
  consensus::ConsensusConfig config_;
  std::vector<Peer> peers_;
  int p_;
  consensus::SoloOrderer orderer_;
  ledger::Ledger ledger_;
  std::optional<SimTime> armed_deadline_;
  std::deque<consensus::Batch> ready_;
  std::shared_ptr<const ledger::Block> in_flight_;
  std::optional<consensus::VoteRound> round_;
  std::vector<BatchInfo> batch_log_;
  std::uint64_t rounds_failed_ = 0;
  std::uint64_t rejected_txs_ = 0;
};

}  // namespace hyperlora::nodes
