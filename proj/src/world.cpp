#include "hyperlora/world.hpp"

#include <algorithm>

namespace hyperlora {

using nodes::Topology;

namespace {
constexpr sim::NodeId kNOrderer = 0;
constexpr sim::NodeId kAOrderer = 1;
constexpr std::uint8_t kPrejoinPrefix = 0x40;

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

void WorldConfig::validate() const {
  if (n_gateways < 1 || n_gateways > 64) throw ArgumentError("n_gateways must be in [1, 64]");
  if (n_servers < 1 || n_servers > 64) throw ArgumentError("n_servers must be in [1, 64]");
  consensus.batch.validate();
  if (consensus.p < 0) throw ArgumentError("consensus.p must be >= 0");
  if (lora_latency < 0 || backhaul_min < 0 || backhaul_max < backhaul_min)
    throw ArgumentError("bad link latency");
  if (air_loss < 0 || air_loss > 1 || backhaul_loss < 0 || backhaul_loss > 1)
    throw ArgumentError("loss rate outside [0,1]");
  if (us_per_work_unit < 0 || gateway_join_delay < 0) throw ArgumentError("negative delay");
}

World::World(WorldConfig config) : config_(config), engine_(config.seed) {
  config_.validate();
  env_.engine = &engine_;
  env_.directory = &directory_;
  env_.metrics = &metrics_;
  env_.net_id = config_.net_id;
  env_.topology = config_.topology;
  env_.us_per_work_unit = config_.us_per_work_unit;

  const int K = config_.n_gateways;
  const int M = config_.n_servers;
  const bool edge = config_.topology == Topology::edge;

  auto n_keys = crypto::generate_keypair("orderer-N", config_.seed);
  auto a_keys = crypto::generate_keypair("orderer-A", config_.seed);
  directory_.add(n_keys, ledger::Role::orderer);
  directory_.add(a_keys, ledger::Role::orderer);

  std::vector<crypto::KeyPair> server_keys, gateway_keys;
  for (int m = 0; m < M; ++m) {
    server_keys.push_back(crypto::generate_keypair("server-" + std::to_string(m), config_.seed));
    directory_.add(server_keys.back(), ledger::Role::server);
  }
  for (int k = 0; k < K; ++k) {
    gateway_keys.push_back(crypto::generate_keypair("gateway-" + std::to_string(k), config_.seed));
    directory_.add(gateway_keys.back(), ledger::Role::gateway);
  }

  const sim::NodeId server_base = 2;
  const sim::NodeId gateway_base = server_base + M;
  next_id_ = gateway_base + K;

  std::vector<nodes::OrdererNode::Peer> n_peers, a_peers;
  for (int m = 0; m < M; ++m) {
    n_peers.push_back({server_base + m, server_keys[m].entity_id});
    a_peers.push_back({server_base + m, server_keys[m].entity_id});
  }
  if (edge)
    for (int k = 0; k < K; ++k) n_peers.push_back({gateway_base + k, gateway_keys[k].entity_id});

  n_orderer_ = std::make_unique<nodes::OrdererNode>(kNOrderer, "orderer-N", env_, n_keys,
                                                    ledger::LedgerKind::network, config_.consensus,
                                                    std::move(n_peers));
  a_orderer_ = std::make_unique<nodes::OrdererNode>(kAOrderer, "orderer-A", env_, a_keys,
                                                    ledger::LedgerKind::application,
                                                    config_.consensus, std::move(a_peers));
  for (int m = 0; m < M; ++m) {
    servers_.push_back(std::make_unique<nodes::NetworkServer>(
        server_base + m, "server-" + std::to_string(m), env_, server_keys[m],
        static_cast<std::uint8_t>(m), kNOrderer, kAOrderer, mix(config_.seed, 100 + m)));
  }
  for (int k = 0; k < K; ++k) {
    gateways_.push_back(std::make_unique<nodes::Gateway>(
        gateway_base + k, "gateway-" + std::to_string(k), env_, gateway_keys[k],
        static_cast<std::uint8_t>(k), server_base + server_for_gateway(k), kNOrderer,
        mix(config_.seed, 200 + k)));
    gateways_.back()->set_join_delay(config_.gateway_join_delay);
  }

  for (int m = 0; m < M; ++m) {
    backhaul(server_base + m, kNOrderer);
    backhaul(server_base + m, kAOrderer);
    for (int j = m + 1; j < M; ++j) backhaul(server_base + m, server_base + j);
  }
  for (int k = 0; k < K; ++k) {
    backhaul(gateway_base + k, kNOrderer);
    for (int m = 0; m < M; ++m) backhaul(gateway_base + k, server_base + m);
    for (int j = k + 1; j < K; ++j) backhaul(gateway_base + k, gateway_base + j);
  }
}

void World::backhaul(sim::NodeId a, sim::NodeId b) {
  auto lat = sim::LatencyModel::uniform(config_.backhaul_min, config_.backhaul_max);
  engine_.add_link(a, b, sim::LinkClass::backhaul, lat, config_.backhaul_loss);
  engine_.add_link(b, a, sim::LinkClass::backhaul, lat, config_.backhaul_loss);
}

void World::air(sim::NodeId device, sim::NodeId gateway) {
  if (engine_.has_link(device, gateway)) return;
  auto lat = sim::LatencyModel::fixed(config_.lora_latency);
  engine_.add_link(device, gateway, sim::LinkClass::lora_air, lat, config_.air_loss);
  engine_.add_link(gateway, device, sim::LinkClass::lora_air, lat, config_.air_loss);
}

nodes::EndDevice& World::add_device(const DeviceSpec& spec) {
  if (spec.gateway < 0 || spec.gateway >= config_.n_gateways)
    throw ArgumentError("gateway index out of range");
  auto index = static_cast<std::uint32_t>(devices_.size());
  auto gw = gateways_[spec.gateway]->id();
  auto id = next_id_++;
  devices_.push_back(std::make_unique<nodes::EndDevice>(id, "device-" + std::to_string(index), env_,
                                                        index, spec.dev_eui, spec.app_eui,
                                                        spec.app_key, gw, spec.seed, spec.behaviour));
  air(id, gw);
  return *devices_.back();
}

void World::register_otaa(const nodes::EndDevice& device) {
  for (const auto& g : gateways_) {
    if (g->id() != device.gateway()) continue;
    if (config_.topology == Topology::edge)
      g->register_device(device.dev_eui(), device.app_key());
    else
      servers_[server_for_gateway(g->index())]->register_device(device.dev_eui(), device.app_key());
    return;
  }
  throw ArgumentError("device has no gateway");
}

void World::move_device(nodes::EndDevice& device, int gateway) {
  auto gw = gateways_.at(gateway)->id();
  air(device.id(), gw);
  device.set_gateway(gw);
}

void World::set_air_loss(const nodes::EndDevice& device, double loss) {
  engine_.link(device.id(), device.gateway()).loss_rate = loss;
  engine_.link(device.gateway(), device.id()).loss_rate = loss;
}

void World::prejoin(const std::vector<nodes::EndDevice*>& devices, std::uint64_t seed) {
  crypto::Rng rng(seed);
  const auto t = static_cast<ledger::Timestamp>(engine_.now() / kMillisecond);
  std::vector<ledger::Transaction> txs;
  auto flush = [&] {
    if (txs.empty()) return;
    auto& chain = n_orderer_->ledger();
    auto block = ledger::assemble_block(std::move(txs), chain.height(), t, chain.tip(),
                                        n_orderer_->keys(), ledger::LedgerKind::network);
    txs.clear();
    auto append = [&](ledger::Ledger& l) {
      if (l.append(block, directory_) != ledger::BlockCheck::ok)
        throw Error("prejoin block rejected by a replica");
    };
    append(chain);
    for (auto& s : servers_) append(s->network().ledger());
    for (auto& g : gateways_)
      if (g->network()) append(g->network()->ledger());
  };

  for (auto* dev : devices) {
    ledger::SessionContext ctx;
    ctx.dev_eui = dev->dev_eui();
    ctx.app_key = dev->app_key();
    ctx.dev_addr = dev_addr_from((std::uint32_t{kPrejoinPrefix} << 24) | (dev->index() + 1));
    crypto::fill_random(rng, ctx.dev_nonce);
    crypto::fill_random(rng, ctx.app_nonce);
    auto keys = crypto::derive_session_keys(ctx.app_key, ctx.app_nonce, config_.net_id, ctx.dev_nonce);
    ctx.nwk_s_key = keys.nwk_s_key;

    const crypto::KeyPair* owner = nullptr;
    for (const auto& g : gateways_) {
      if (g->id() != dev->gateway()) continue;
      owner = config_.topology == Topology::edge ? &g->keys()
                                                  : &servers_[server_for_gateway(g->index())]->keys();
    }
    if (!owner) throw ArgumentError("device has no gateway");
    txs.push_back(ledger::make_network_tx(*owner, ctx, t, rng));
    if (txs.size() >= config_.consensus.batch.max_message_count) flush();

    dev->set_session(nodes::Session{ctx.dev_addr, keys.nwk_s_key, keys.app_s_key, 0, std::nullopt},
                     nodes::DeviceMode::otaa);
  }
  flush();
}

bool World::is_gateway(sim::NodeId id) const {
  return !gateways_.empty() && id >= gateways_.front()->id() && id <= gateways_.back()->id();
}

bool World::is_cloud(sim::NodeId id) const {
  return id == kNOrderer || id == kAOrderer ||
         (!servers_.empty() && id >= servers_.front()->id() && id <= servers_.back()->id());
}

std::uint64_t World::gateway_to_cloud_bytes() const {
  std::uint64_t total = 0;
  for (const auto& [key, link] : engine_.links())
    if (is_gateway(key.first) && is_cloud(key.second)) total += link.offered_bytes;
  return total;
}

std::uint64_t World::server_work_units() const {
  std::uint64_t total = 0;
  for (const auto& s : servers_) total += s->work().units();
  return total;
}

std::uint64_t World::gateway_work_units() const {
  std::uint64_t total = 0;
  for (const auto& g : gateways_) total += g->work().units();
  return total;
}

std::vector<const nodes::Node*> World::all_nodes() const {
  std::vector<const nodes::Node*> out{n_orderer_.get(), a_orderer_.get()};
  for (const auto& s : servers_) out.push_back(s.get());
  for (const auto& g : gateways_) out.push_back(g.get());
  for (const auto& d : devices_) out.push_back(d.get());
  return out;
}

}  // namespace hyperlora
