#include "hyperlora/nodes.hpp"

#include <algorithm>

namespace hyperlora::nodes {

using ledger::LedgerKind;

namespace {
ledger::Timestamp to_ms(SimTime t) { return static_cast<ledger::Timestamp>(t / kMillisecond); }

std::uint16_t nonce_value(const DevNonce& n) {
  return static_cast<std::uint16_t>(n[0] | (n[1] << 8));
}
}  // namespace

const char* to_string(Topology t) { return t == Topology::edge ? "edge" : "traditional"; }

int work_units(WorkKind k) {
  switch (k) {
    case WorkKind::parse: return 1;
    case WorkKind::mic: return 2;
    case WorkKind::query: return 1;
    case WorkKind::tx_build: return 3;
  }
  return 0;
}

std::uint64_t WorkCounters::units() const {
  return parse * work_units(WorkKind::parse) + mic * work_units(WorkKind::mic) +
         query * work_units(WorkKind::query) + tx_build * work_units(WorkKind::tx_build);
}

const char* to_string(RequestKind k) { return k == RequestKind::join ? "join" : "uplink"; }

const char* to_string(RequestStatus s) {
  switch (s) {
    case RequestStatus::in_flight: return "in_flight";
    case RequestStatus::completed: return "completed";
    case RequestStatus::failed: return "failed";
  }
  return "?";
}

MetricsSink::RequestId MetricsSink::issue(RequestKind kind, std::uint32_t device, SimTime now) {
  requests_.push_back(RequestRecord{kind, device, now, -1, RequestStatus::in_flight});
  return requests_.size() - 1;
}

void MetricsSink::complete(RequestId id, SimTime now) {
  auto& r = requests_.at(id);
  if (r.status != RequestStatus::in_flight) return;
  r.status = RequestStatus::completed;
  r.ended = now;
}

void MetricsSink::fail(RequestId id, SimTime now) {
  auto& r = requests_.at(id);
  if (r.status != RequestStatus::in_flight) return;
  r.status = RequestStatus::failed;
  r.ended = now;
}

std::uint64_t DropCounters::total() const {
  return malformed + unknown_device + undecryptable + bad_mic + replay + stale_fcnt + downlink_dropped;
}

// ---------------------------------------------------------------------------

Node::Node(NodeId id, std::string name, Environment& env) : env_(env), id_(id), name_(std::move(name)) {
  env_.engine->register_node(id_, [this](const Engine::Event& ev) { dispatch(ev); });
}

void Node::dispatch(const Engine::Event& ev) {
  if (const auto* m = std::get_if<msg::Message>(&ev.body)) {
    ++received_;
    on_message(ev.from, *m);
  } else {
    on_timer(std::get<TimerToken>(ev.body));
  }
}

void Node::charge(WorkKind kind) {
  switch (kind) {
    case WorkKind::parse: ++work_.parse; break;
    case WorkKind::mic: ++work_.mic; break;
    case WorkKind::query: ++work_.query; break;
    case WorkKind::tx_build: ++work_.tx_build; break;
  }
  if (env_.us_per_work_unit > 0) {
    busy_until_ = std::max(busy_until_, now()) + work_units(kind) * env_.us_per_work_unit;
  }
}

void Node::send(NodeId to, msg::Message m, SimTime extra_delay) {
  SimTime queueing = std::max<SimTime>(0, busy_until_ - now());
  env_.engine->send(id_, to, std::move(m), queueing + extra_delay);
}

sim::EventId Node::set_timer(SimTime delay, TimerToken token) {
  return env_.engine->schedule_timer(delay, id_, token);
}

// ---------------------------------------------------------------------------

Replica::Replica(LedgerKind kind, NodeId orderer, const crypto::KeyPair& keys,
                 const ledger::KeyDirectory& directory, SendFn send)
    : kind_(kind),
      orderer_(orderer),
      keys_(keys),
      directory_(directory),
      send_(std::move(send)),
      ledger_(kind) {}

bool Replica::handle(NodeId from, const msg::Message& m) {
  if (const auto* b = std::get_if<msg::BlockMsg>(&m)) {
    if (b->kind != kind_) return false;
    if (b->purpose == msg::BlockPurpose::deliver) {
      deliver(b->block, from);
      return true;
    }
    auto hash = b->block->hash();
    bool valid = false;
    if (!byzantine_ && b->block->zeta == ledger_.height()) {
      try {
        valid = ledger::validate_block(*b->block, ledger_.tip(), directory_, kind_);
      } catch (const ledger::UnknownEntity&) {
        valid = false;
      }
    } else if (b->block->zeta > ledger_.height() && !sync_outstanding_) {
      request_sync(from);
    }
    proposals_[hash] = b->block;
    auto verdict = valid ? consensus::Verdict::valid : consensus::Verdict::invalid;
    send_(from, msg::VoteMsg{kind_, hash, verdict, keys_.entity_id,
                             consensus::sign_vote(keys_, hash, verdict)});
    return true;
  }
  if (const auto* c = std::get_if<msg::CommitMsg>(&m)) {
    if (c->kind != kind_) return false;
    auto it = proposals_.find(c->block_hash);
    if (it != proposals_.end()) {
      auto block = it->second;
      proposals_.erase(it);
      deliver(block, from);
    }
    return true;
  }
  if (const auto* s = std::get_if<msg::SyncRequest>(&m)) {
    if (s->kind != kind_) return false;
    msg::SyncResponse resp{kind_, {}, 0};
    const auto& blocks = ledger_.blocks();
    for (auto i = s->from_height; i < blocks.size(); ++i) {
      resp.blocks.push_back(std::make_shared<const ledger::Block>(blocks[i]));
      resp.encoded_size += 4 + blocks[i].serialize().size();
    }
    send_(from, std::move(resp));
    return true;
  }
  if (const auto* s = std::get_if<msg::SyncResponse>(&m)) {
    if (s->kind != kind_) return false;
    sync_outstanding_ = false;
    for (const auto& b : s->blocks) deliver(b, from);
    return true;
  }
  return false;
}

void Replica::deliver(const std::shared_ptr<const ledger::Block>& block, NodeId from) {
  auto height = ledger_.height();
  if (block->zeta < height) return;
  if (block->zeta > height) {
    buffered_[block->zeta] = block;
    if (!sync_outstanding_) request_sync(from);
    return;
  }
  if (ledger_.append(*block, directory_) != ledger::BlockCheck::ok) {
    ++rejected_;
    return;
  }
  if (on_commit_) on_commit_(*ledger_.tip());
  drain_buffer();
}

void Replica::drain_buffer() {
  while (!buffered_.empty()) {
    auto it = buffered_.begin();
    if (it->first < ledger_.height()) {
      buffered_.erase(it);
      continue;
    }
    if (it->first > ledger_.height()) return;
    auto block = it->second;
    buffered_.erase(it);
    if (ledger_.append(*block, directory_) != ledger::BlockCheck::ok) {
      ++rejected_;
      return;
    }
    if (on_commit_) on_commit_(*ledger_.tip());
  }
}

void Replica::wipe() {
  ledger_ = ledger::Ledger(kind_);
  proposals_.clear();
  buffered_.clear();
  sync_outstanding_ = false;
}

void Replica::request_sync(NodeId peer) {
  sync_outstanding_ = true;
  send_(peer, msg::SyncRequest{kind_, ledger_.height()});
}

// ---------------------------------------------------------------------------

JoinServer::JoinServer(const crypto::KeyPair& owner, std::uint8_t addr_prefix, NetId net_id,
                       std::uint64_t seed)
    : owner_(owner), prefix_(addr_prefix), net_id_(net_id), rng_(seed) {}

void JoinServer::register_device(const DevEui& eui, const crypto::SymmetricKey& app_key) {
  registry_[eui] = app_key;
}

DevAddr JoinServer::allocate(const DevEui& eui, const ledger::Ledger* n_ledger) {
  if (auto it = assigned_.find(eui); it != assigned_.end()) return it->second;
  DevAddr addr;
  std::optional<DevAddr> known = n_ledger ? n_ledger->dev_addr_of(eui) : std::nullopt;
  if (known && (*known)[3] == prefix_) {
    addr = *known;
  } else {
    if (next_addr_ > 0x00ffffff) throw Error("DevAddr space exhausted");
    addr = dev_addr_from((std::uint32_t{prefix_} << 24) | next_addr_++);
  }
  assigned_[eui] = addr;
  return addr;
}

JoinServer::Outcome JoinServer::handle_join(Node& host, const lora::JoinRequestFrame& req,
                                            const ledger::Ledger* n_ledger, ledger::Timestamp t) {
  Outcome out;
  auto reg = registry_.find(req.dev_eui);
  if (reg == registry_.end()) {
    out.status = Status::unknown_device;
    return out;
  }
  const auto& app_key = reg->second;
  host.charge(WorkKind::mic);
  if (!lora::verify_mic(req, app_key)) {
    out.status = Status::bad_mic;
    return out;
  }
  auto& used = used_nonces_[req.dev_eui];
  if (!used.insert(nonce_value(req.dev_nonce)).second) {
    out.status = Status::replayed_nonce;
    return out;
  }

  ledger::SessionContext ctx;
  ctx.dev_eui = req.dev_eui;
  ctx.app_key = app_key;
  ctx.dev_addr = allocate(req.dev_eui, n_ledger);
  ctx.dev_nonce = req.dev_nonce;
  crypto::fill_random(rng_, ctx.app_nonce);
  auto keys = crypto::derive_session_keys(app_key, ctx.app_nonce, net_id_, ctx.dev_nonce);
  ctx.nwk_s_key = keys.nwk_s_key;

  host.charge(WorkKind::tx_build);
  out.tx = ledger::make_network_tx(owner_, ctx, t, rng_);
  host.charge(WorkKind::mic);
  auto accept = lora::build_join_accept(ctx, app_key, net_id_);
  out.accept_wire = lora::seal_join_accept(lora::serialize_frame(accept), app_key, ctx.dev_nonce);
  out.context = ctx;
  out.app_s_key = keys.app_s_key;
  out.status = Status::accepted;
  return out;
}

// ---------------------------------------------------------------------------

NetworkConnector::NetworkConnector(const crypto::KeyPair& own) { ring_.push_back(own); }

void NetworkConnector::remember_pending(const ledger::SessionContext& ctx, ledger::Timestamp t) {
  pending_[dev_addr_value(ctx.dev_addr)] = {t, ctx};
}

std::optional<ledger::SessionContext> NetworkConnector::lookup(const DevAddr& addr,
                                                               const ledger::Ledger& n_ledger,
                                                               bool* undecryptable) {
  auto key = dev_addr_value(addr);
  auto entry = n_ledger.query_context(addr);
  auto pend = pending_.find(key);
  if (entry && (pend == pending_.end() || entry->t >= pend->second.first)) {
    if (pend != pending_.end()) {
      pending_.erase(pend);
      pend = pending_.end();
    }
    auto c = cache_.find(key);
    if (c != cache_.end() && c->second.block == entry->block && c->second.t == entry->t)
      return c->second.context;
    for (const auto& kp : ring_) {
      try {
        auto ctx = ledger::SessionContext::deserialize(crypto::pk_decrypt(kp.private_key, entry->d_bar));
        cache_[key] = Cached{entry->block, entry->t, ctx};
        return ctx;
      } catch (const Error&) {
      }
    }
    if (undecryptable) *undecryptable = true;
    return std::nullopt;
  }
  if (pend != pending_.end()) return pend->second.second;
  return std::nullopt;
}

NetworkConnector::UplinkResult NetworkConnector::process_uplink(Node& host, const lora::DataFrame& frame,
                                                                const ledger::Ledger& n_ledger) {
  UplinkResult r;
  r.frame = frame;
  host.charge(WorkKind::query);
  bool undecryptable = false;
  auto ctx = lookup(frame.dev_addr, n_ledger, &undecryptable);
  if (!ctx) {
    r.status = undecryptable ? Status::undecryptable : Status::unknown_device;
    return r;
  }
  host.charge(WorkKind::mic);
  if (!lora::verify_mic(frame, ctx->nwk_s_key)) {
    r.status = Status::bad_mic;
    return r;
  }
  auto key = dev_addr_value(frame.dev_addr);
  auto last = last_fcnt_.find(key);
  if (last != last_fcnt_.end() && frame.fcnt <= last->second) {
    r.status = Status::stale_fcnt;
    return r;
  }
  last_fcnt_[key] = frame.fcnt;
  r.context = *ctx;
  r.status = Status::accepted;
  return r;
}

Bytes NetworkConnector::build_ack(Node& host, const ledger::SessionContext& ctx, std::uint16_t fcnt) {
  lora::DataFrame ack;
  ack.direction = lora::Direction::down;
  ack.dev_addr = ctx.dev_addr;
  ack.fcnt = fcnt;
  ack.fport = 0;
  host.charge(WorkKind::mic);
  return lora::serialize_frame(lora::with_mic(ack, ctx.nwk_s_key));
}

std::optional<Bytes> NetworkConnector::build_downlink(Node& host, const DevAddr& addr,
                                                      std::uint16_t fcnt_down, std::uint8_t fport,
                                                      const lora::AppCiphertext& payload,
                                                      const ledger::Ledger& n_ledger) {
  host.charge(WorkKind::query);
  auto ctx = lookup(addr, n_ledger);
  if (!ctx) return std::nullopt;
  lora::DataFrame f;
  f.direction = lora::Direction::down;
  f.dev_addr = addr;
  f.fcnt = fcnt_down;
  f.fport = fport;
  f.frm_payload = payload.bytes;
  host.charge(WorkKind::mic);
  return lora::serialize_frame(lora::with_mic(f, ctx->nwk_s_key));
}

Bytes AppRecord::encode() const {
  ByteWriter w;
  w.raw(dev_addr);
  w.u16(fcnt);
  w.u8(fport);
  w.raw(payload.bytes);
  return std::move(w).take();
}

AppRecord AppRecord::decode(ByteView data) {
  ByteReader r(data);
  AppRecord rec;
  rec.dev_addr = r.array<4>();
  rec.fcnt = r.u16();
  rec.fport = r.u8();
  auto rest = r.raw(r.remaining());
  rec.payload.bytes.assign(rest.begin(), rest.end());
  return rec;
}

// ---------------------------------------------------------------------------

EndDevice::EndDevice(NodeId id, std::string name, Environment& env, std::uint32_t index,
                     DevEui dev_eui, AppEui app_eui, crypto::SymmetricKey app_key, NodeId gateway,
                     std::uint64_t seed, DeviceBehaviour behaviour)
    : Node(id, std::move(name), env),
      index_(index),
      dev_eui_(dev_eui),
      app_eui_(app_eui),
      app_key_(app_key),
      gateway_(gateway),
      rng_(seed),
      behaviour_(behaviour) {}

void EndDevice::set_session(Session s, DeviceMode mode) {
  session_ = std::move(s);
  mode_ = mode;
  state_ = DeviceState::joined;
}

SimTime EndDevice::draw(SimTime lo, SimTime hi) {
  if (hi <= lo) return lo;
  return std::uniform_int_distribution<SimTime>(lo, hi)(rng_);
}

void EndDevice::start_join_loop(SimTime first_delay) { set_timer(first_delay, token(kJoinDue, 0)); }

void EndDevice::start_uplink_loop(SimTime first_delay) { set_timer(first_delay, token(kUplinkDue, 0)); }

void EndDevice::emit(Bytes frame) {
  last_emitted_ = frame;
  send(gateway_, msg::AirFrame{std::move(frame)});
}

void EndDevice::join_now() {
  if (pending_join_) {
    cancel_timer(pending_join_->timeout);
    env_.metrics->fail(pending_join_->request, now());
    pending_join_.reset();
  }
  if (used_nonces_.size() >= 0x10000) throw Error("DevNonce space exhausted");
  std::uint16_t nonce;
  do {
    nonce = static_cast<std::uint16_t>(rng_());
  } while (used_nonces_.count(nonce));
  used_nonces_.insert(nonce);

  lora::JoinRequestFrame req;
  req.app_eui = app_eui_;
  req.dev_eui = dev_eui_;
  req.dev_nonce = {static_cast<std::uint8_t>(nonce), static_cast<std::uint8_t>(nonce >> 8)};
  emit(lora::serialize_frame(lora::with_mic(req, app_key_)));

  auto attempt = ++join_attempts_;
  auto request = env_.metrics->issue(RequestKind::join, index_, now());
  auto timeout = set_timer(behaviour_.join_timeout, token(kJoinTimeout, attempt));
  pending_join_ = PendingJoin{request, req.dev_nonce, timeout, attempt};
  state_ = DeviceState::joining;
}

void EndDevice::uplink_now() {
  if (!session_) return;
  lora::AppPlaintext plain;
  plain.bytes.resize(behaviour_.payload_bytes);
  crypto::fill_random(rng_, plain.bytes);
  uplink_now(plain, 1);
}

void EndDevice::uplink_now(const lora::AppPlaintext& plain, std::uint8_t fport) {
  if (!session_) return;
  auto fcnt = ++session_->fcnt_up;
  lora::DataFrame f;
  f.direction = lora::Direction::up;
  f.dev_addr = session_->dev_addr;
  f.fcnt = fcnt;
  f.fport = fport;
  f.frm_payload =
      lora::encrypt_payload(session_->app_s_key, f.dev_addr, fcnt, lora::Direction::up, plain).bytes;
  emit(lora::serialize_frame(lora::with_mic(f, session_->nwk_s_key)));
  sent_.push_back(plain);

  auto request = env_.metrics->issue(RequestKind::uplink, index_, now());
  auto timeout = set_timer(behaviour_.uplink_timeout, token(kUplinkTimeout, fcnt));
  pending_uplinks_[fcnt] = PendingUplink{request, timeout};
}

void EndDevice::on_timer(TimerToken t) {
  auto kind = static_cast<TimerKind>(t >> 32);
  auto data = t & 0xffffffffULL;
  switch (kind) {
    case kJoinDue:
      if (now() >= behaviour_.stop_at) return;
      join_now();
      set_timer(draw(behaviour_.join_interval_min, behaviour_.join_interval_max), token(kJoinDue, 0));
      break;
    case kJoinTimeout:
      if (pending_join_ && pending_join_->attempt == data) {
        env_.metrics->fail(pending_join_->request, now());
        pending_join_.reset();
        state_ = session_ ? DeviceState::joined : DeviceState::idle;
      }
      break;
    case kUplinkDue:
      if (now() >= behaviour_.stop_at) return;
      uplink_now();
      set_timer(draw(behaviour_.uplink_interval_min, behaviour_.uplink_interval_max),
                token(kUplinkDue, 0));
      break;
    case kUplinkTimeout: {
      auto it = pending_uplinks_.find(static_cast<std::uint16_t>(data));
      if (it != pending_uplinks_.end()) {
        env_.metrics->fail(it->second.request, now());
        pending_uplinks_.erase(it);
      }
      break;
    }
  }
}

void EndDevice::on_message(NodeId, const msg::Message& m) {
  const auto* air = std::get_if<msg::AirFrame>(&m);
  if (!air || air->bytes.empty()) {
    ++frames_rejected_;
    return;
  }
  switch (air->bytes[0]) {
    case lora::kMhdrJoinAccept: handle_join_accept(air->bytes); break;
    case lora::kMhdrDataDown: handle_downlink(air->bytes); break;
    default: ++frames_rejected_;
  }
}

void EndDevice::handle_join_accept(ByteView wire) {
  if (!pending_join_) {
    ++frames_rejected_;
    return;
  }
  auto accept = lora::open_join_accept(wire, app_key_, pending_join_->nonce);
  if (!accept) {
    ++frames_rejected_;
    return;
  }
  auto keys = crypto::derive_session_keys(app_key_, accept->app_nonce, accept->net_id,
                                          pending_join_->nonce);
  session_ = Session{accept->dev_addr, keys.nwk_s_key, keys.app_s_key, 0, std::nullopt};
  state_ = DeviceState::joined;
  cancel_timer(pending_join_->timeout);
  env_.metrics->complete(pending_join_->request, now());
  pending_join_.reset();
  ++joins_completed_;
}

void EndDevice::handle_downlink(ByteView wire) {
  if (!session_) {
    ++frames_rejected_;
    return;
  }
  lora::DataFrame f;
  try {
    f = std::get<lora::DataFrame>(lora::parse_frame(wire));
  } catch (const DecodeError&) {
    ++frames_rejected_;
    return;
  }
  if (f.direction != lora::Direction::down || f.dev_addr != session_->dev_addr ||
      !lora::verify_mic(f, session_->nwk_s_key)) {
    ++frames_rejected_;
    return;
  }
  if (f.fport == 0 && f.frm_payload.empty()) {
    auto it = pending_uplinks_.find(f.fcnt);
    if (it == pending_uplinks_.end()) return;
    cancel_timer(it->second.timeout);
    env_.metrics->complete(it->second.request, now());
    pending_uplinks_.erase(it);
    ++uplinks_acked_;
    return;
  }
  if (session_->last_fcnt_down && f.fcnt <= *session_->last_fcnt_down) {
    ++frames_rejected_;
    return;
  }
  session_->last_fcnt_down = f.fcnt;
  downlinks_.push_back(lora::decrypt_payload(session_->app_s_key, f.dev_addr, f.fcnt,
                                             lora::Direction::down, lora::AppCiphertext{f.frm_payload}));
}

// ---------------------------------------------------------------------------

Gateway::Gateway(NodeId id, std::string name, Environment& env, crypto::KeyPair keys,
                 std::uint8_t index, NodeId upstream_server, NodeId n_orderer, std::uint64_t seed)
    : Node(id, std::move(name), env),
      keys_(std::move(keys)),
      index_(index),
      upstream_(upstream_server),
      n_orderer_(n_orderer),
      js_(keys_, index, env.net_id, seed),
      nc_(keys_) {
  if (env.topology == Topology::edge) {
    network_.emplace(LedgerKind::network, n_orderer, keys_, *env.directory,
                     [this](NodeId to, msg::Message m) { send(to, std::move(m)); });
  }
}

void Gateway::register_device(const DevEui& eui, const crypto::SymmetricKey& app_key) {
  js_.register_device(eui, app_key);
}

void Gateway::key_handover(const Gateway& failed, Gateway& replacement) {
  replacement.nc_.import_key(failed.keys_);
}

void Gateway::on_message(NodeId from, const msg::Message& m) {
  if (const auto* air = std::get_if<msg::AirFrame>(&m)) {
    if (env_.topology == Topology::edge)
      handle_air_edge(from, air->bytes);
    else
      send(upstream_, msg::ForwardedFrame{from, air->bytes});
    return;
  }
  if (const auto* dl = std::get_if<msg::DownlinkData>(&m)) {
    auto key = dev_addr_value(dl->dev_addr);
    auto rx = rx_handles_.find(key);
    std::optional<Bytes> frame;
    if (network_ && rx != rx_handles_.end())
      frame = nc_.build_downlink(*this, dl->dev_addr, dl->fcnt_down, dl->fport, dl->payload,
                                 network_->ledger());
    if (!frame) {
      ++drops_.downlink_dropped;
      return;
    }
    send(rx->second, msg::AirFrame{std::move(*frame)});
    return;
  }
  if (const auto* df = std::get_if<msg::DownlinkFrame>(&m)) {
    send(df->rx_handle, msg::AirFrame{df->frame});
    return;
  }
  if (network_) network_->handle(from, m);
}

void Gateway::handle_air_edge(NodeId device, const Bytes& bytes) {
  charge(WorkKind::parse);
  lora::Frame frame;
  try {
    frame = lora::parse_frame(bytes);
  } catch (const DecodeError&) {
    ++drops_.malformed;
    return;
  }
  auto t = to_ms(now());
  if (const auto* req = std::get_if<lora::JoinRequestFrame>(&frame)) {
    auto out = js_.handle_join(*this, *req, &network_->ledger(), t);
    switch (out.status) {
      case JoinServer::Status::unknown_device: ++drops_.unknown_device; return;
      case JoinServer::Status::bad_mic: ++drops_.bad_mic; return;
      case JoinServer::Status::replayed_nonce: ++drops_.replay; return;
      case JoinServer::Status::accepted: break;
    }
    nc_.remember_pending(out.context, t);
    rx_handles_[dev_addr_value(out.context.dev_addr)] = device;
    send(n_orderer_, msg::SubmitTx{LedgerKind::network, std::move(out.tx)});
    send(device, msg::AirFrame{std::move(out.accept_wire)}, join_delay_);
    ++joins_accepted_;
    return;
  }
  const auto* data = std::get_if<lora::DataFrame>(&frame);
  if (!data || data->direction != lora::Direction::up) {
    ++drops_.malformed;
    return;
  }
  auto res = nc_.process_uplink(*this, *data, network_->ledger());
  switch (res.status) {
    case NetworkConnector::Status::unknown_device: ++drops_.unknown_device; return;
    case NetworkConnector::Status::undecryptable: ++drops_.undecryptable; return;
    case NetworkConnector::Status::bad_mic: ++drops_.bad_mic; return;
    case NetworkConnector::Status::stale_fcnt: ++drops_.stale_fcnt; return;
    case NetworkConnector::Status::accepted: break;
  }
  rx_handles_[dev_addr_value(data->dev_addr)] = device;
  send(upstream_, msg::UplinkNotice{data->dev_addr, data->fcnt, data->fport,
                                    lora::AppCiphertext{data->frm_payload}});
  send(device, msg::AirFrame{nc_.build_ack(*this, res.context, data->fcnt)});
  ++uplinks_forwarded_;
}

// ---------------------------------------------------------------------------

NetworkServer::NetworkServer(NodeId id, std::string name, Environment& env, crypto::KeyPair keys,
                             std::uint8_t index, NodeId n_orderer, NodeId a_orderer,
                             std::uint64_t seed)
    : Node(id, std::move(name), env),
      keys_(std::move(keys)),
      index_(index),
      n_orderer_(n_orderer),
      a_orderer_(a_orderer),
      network_(LedgerKind::network, n_orderer, keys_, *env.directory,
               [this](NodeId to, msg::Message m) { send(to, std::move(m)); }),
      application_(LedgerKind::application, a_orderer, keys_, *env.directory,
                   [this](NodeId to, msg::Message m) { send(to, std::move(m)); }),
      js_(keys_, static_cast<std::uint8_t>(0x80 | index), env.net_id, seed),
      nc_(keys_),
      rng_(seed ^ 0x5eed5eed5eed5eedULL) {}

void NetworkServer::register_device(const DevEui& eui, const crypto::SymmetricKey& app_key) {
  js_.register_device(eui, app_key);
}

NetworkServer::ProvisionResult NetworkServer::abp_provision(const ledger::SessionContext& context,
                                                            ByteView serving_public_key) {
  if (network_.ledger().query_context(context.dev_addr)) return ProvisionResult::rejected_collision;
  charge(WorkKind::tx_build);
  auto t = to_ms(now());
  auto tx = ledger::make_network_tx(keys_, serving_public_key, context, t, rng_);
  if (std::equal(serving_public_key.begin(), serving_public_key.end(), keys_.public_key.begin(),
                 keys_.public_key.end()))
    nc_.remember_pending(context, t);
  send(n_orderer_, msg::SubmitTx{LedgerKind::network, std::move(tx)});
  return ProvisionResult::submitted;
}

void NetworkServer::downlink(const DevAddr& addr, std::uint8_t fport, std::uint16_t fcnt_down,
                             const lora::AppCiphertext& payload) {
  downlink_queue_[dev_addr_value(addr)].push_back(QueuedDownlink{fport, fcnt_down, payload});
  flush_downlinks(addr);
}

void NetworkServer::flush_downlinks(const DevAddr& addr) {
  auto key = dev_addr_value(addr);
  auto route = routes_.find(key);
  auto q = downlink_queue_.find(key);
  if (route == routes_.end() || q == downlink_queue_.end()) return;
  for (auto& d : q->second) {
    if (env_.topology == Topology::edge) {
      send(route->second.gateway, msg::DownlinkData{addr, d.fcnt_down, d.fport, d.payload});
    } else {
      auto frame = nc_.build_downlink(*this, addr, d.fcnt_down, d.fport, d.payload, network_.ledger());
      if (!frame) {
        ++drops_.downlink_dropped;
        continue;
      }
      send(route->second.gateway, msg::DownlinkFrame{route->second.rx_handle, std::move(*frame)});
    }
  }
  downlink_queue_.erase(q);
}

void NetworkServer::ingest(const DevAddr& addr, std::uint16_t fcnt, std::uint8_t fport,
                           const lora::AppCiphertext& payload) {
  charge(WorkKind::tx_build);
  AppRecord rec{addr, fcnt, fport, payload};
  auto tx = ledger::make_app_tx(keys_, rec.encode(), to_ms(now()));
  send(a_orderer_, msg::SubmitTx{LedgerKind::application, std::move(tx)});
  ++ingested_;
}

void NetworkServer::on_message(NodeId from, const msg::Message& m) {
  if (const auto* n = std::get_if<msg::UplinkNotice>(&m)) {
    routes_[dev_addr_value(n->dev_addr)] = Route{from, 0};
    ingest(n->dev_addr, n->fcnt, n->fport, n->payload);
    flush_downlinks(n->dev_addr);
    return;
  }
  if (const auto* f = std::get_if<msg::ForwardedFrame>(&m)) {
    handle_forwarded(from, *f);
    return;
  }
  if (network_.handle(from, m)) return;
  application_.handle(from, m);
}

void NetworkServer::handle_forwarded(NodeId gateway, const msg::ForwardedFrame& f) {
  charge(WorkKind::parse);
  lora::Frame frame;
  try {
    frame = lora::parse_frame(f.frame);
  } catch (const DecodeError&) {
    ++drops_.malformed;
    return;
  }
  auto t = to_ms(now());
  if (const auto* req = std::get_if<lora::JoinRequestFrame>(&frame)) {
    auto out = js_.handle_join(*this, *req, &network_.ledger(), t);
    switch (out.status) {
      case JoinServer::Status::unknown_device: ++drops_.unknown_device; return;
      case JoinServer::Status::bad_mic: ++drops_.bad_mic; return;
      case JoinServer::Status::replayed_nonce: ++drops_.replay; return;
      case JoinServer::Status::accepted: break;
    }
    nc_.remember_pending(out.context, t);
    routes_[dev_addr_value(out.context.dev_addr)] = Route{gateway, f.rx_handle};
    send(n_orderer_, msg::SubmitTx{LedgerKind::network, std::move(out.tx)});
    send(gateway, msg::DownlinkFrame{f.rx_handle, std::move(out.accept_wire)});
    return;
  }
  const auto* data = std::get_if<lora::DataFrame>(&frame);
  if (!data || data->direction != lora::Direction::up) {
    ++drops_.malformed;
    return;
  }
  auto res = nc_.process_uplink(*this, *data, network_.ledger());
  switch (res.status) {
    case NetworkConnector::Status::unknown_device: ++drops_.unknown_device; return;
    case NetworkConnector::Status::undecryptable: ++drops_.undecryptable; return;
    case NetworkConnector::Status::bad_mic: ++drops_.bad_mic; return;
    case NetworkConnector::Status::stale_fcnt: ++drops_.stale_fcnt; return;
    case NetworkConnector::Status::accepted: break;
  }
  routes_[dev_addr_value(data->dev_addr)] = Route{gateway, f.rx_handle};
  ingest(data->dev_addr, data->fcnt, data->fport, lora::AppCiphertext{data->frm_payload});
  send(gateway, msg::DownlinkFrame{f.rx_handle, nc_.build_ack(*this, res.context, data->fcnt)});
  flush_downlinks(data->dev_addr);
}

// ---------------------------------------------------------------------------

OrdererNode::OrdererNode(NodeId id, std::string name, Environment& env, crypto::KeyPair keys,
                         LedgerKind kind, consensus::ConsensusConfig config, std::vector<Peer> peers)
    : Node(id, std::move(name), env),
      keys_(std::move(keys)),
      kind_(kind),
      config_(config),
      peers_(std::move(peers)),
      p_(std::clamp(config.p, 0, std::max(0, (static_cast<int>(peers_.size()) - 1) / 3))),
      orderer_(config.batch),
      ledger_(kind) {}

void OrdererNode::on_message(NodeId from, const msg::Message& m) {
  if (const auto* s = std::get_if<msg::SubmitTx>(&m)) {
    if (s->kind != kind_) return;
    bool ok = false;
    try {
      ok = ledger::verify_tx(s->tx, *env_.directory);
      if (kind_ == LedgerKind::application)
        ok = ok && env_.directory->role_of(s->tx.requester) == ledger::Role::server;
    } catch (const ledger::UnknownEntity&) {
      ok = false;
    }
    if (!ok) {
      ++rejected_txs_;
      return;
    }
    std::optional<consensus::Batch> batch;
    try {
      batch = orderer_.submit(s->tx, now());
    } catch (const consensus::RejectedDuplicate&) {
      ++rejected_txs_;
      return;
    }
    if (batch) {
      accept_batch(std::move(*batch));
    } else if (auto deadline = orderer_.deadline(); deadline && deadline != armed_deadline_) {
      armed_deadline_ = deadline;
      set_timer(*deadline - now(), kBatchTimer);
    }
    return;
  }
  if (const auto* v = std::get_if<msg::VoteMsg>(&m)) {
    if (v->kind != kind_ || !round_ || v->block_hash != round_->block_hash()) return;
    try {
      round_->collect_vote(v->voter, v->verdict, v->signature, *env_.directory);
    } catch (const Error&) {
      return;
    }
    switch (round_->check_consensus()) {
      case consensus::RoundState::committed:
        commit_current();
        start_next();
        break;
      case consensus::RoundState::failed:
        ++rounds_failed_;
        round_.reset();
        set_timer(config_.retry_backoff, kRetry);
        break;
      case consensus::RoundState::pending: break;
    }
    return;
  }
  if (const auto* s = std::get_if<msg::SyncRequest>(&m)) {
    if (s->kind != kind_) return;
    msg::SyncResponse resp{kind_, {}, 0};
    const auto& blocks = ledger_.blocks();
    for (auto i = s->from_height; i < blocks.size(); ++i) {
      resp.blocks.push_back(std::make_shared<const ledger::Block>(blocks[i]));
      resp.encoded_size += 4 + blocks[i].serialize().size();
    }
    send(from, std::move(resp));
  }
}

void OrdererNode::on_timer(TimerToken token) {
  if (token == kRetry) {
    if (in_flight_ && !round_) propose();
    return;
  }
  armed_deadline_.reset();
  if (auto batch = orderer_.on_timer(now())) {
    accept_batch(std::move(*batch));
  } else if (auto deadline = orderer_.deadline()) {
    armed_deadline_ = deadline;
    set_timer(std::max<SimTime>(0, *deadline - now()), kBatchTimer);
  }
}

void OrdererNode::accept_batch(consensus::Batch batch) {
  batch_log_.push_back(BatchInfo{batch.txs.size(), batch.reason, batch.cut_at});
  ready_.push_back(std::move(batch));
  start_next();
}

void OrdererNode::start_next() {
  while (!in_flight_ && !ready_.empty()) {
    auto batch = std::move(ready_.front());
    ready_.pop_front();
    in_flight_ = std::make_shared<const ledger::Block>(ledger::assemble_block(
        std::move(batch.txs), ledger_.height(), to_ms(now()), ledger_.tip(), keys_, kind_));
    if (config_.mode == consensus::Mode::solo) {
      commit_current();
    } else {
      propose();
    }
  }
}

void OrdererNode::propose() {
  std::vector<EntityId> voters;
  for (const auto& p : peers_) voters.push_back(p.entity);
  round_.emplace(in_flight_->hash(), voters, p_);
  auto m = msg::make_block_msg(kind_, msg::BlockPurpose::propose, in_flight_);
  for (const auto& p : peers_) send(p.node, m);
}

void OrdererNode::commit_current() {
  if (ledger_.append(*in_flight_, *env_.directory) != ledger::BlockCheck::ok)
    throw Error("orderer produced a block that does not extend its own chain");
  if (config_.mode == consensus::Mode::solo) {
    auto m = msg::make_block_msg(kind_, msg::BlockPurpose::deliver, in_flight_);
    for (const auto& p : peers_) send(p.node, m);
  } else {
    auto hash = in_flight_->hash();
    for (const auto& p : peers_) send(p.node, msg::CommitMsg{kind_, hash});
  }
  in_flight_.reset();
  round_.reset();
}

}  // namespace hyperlora::nodes
