#include "hyperlora/harness.hpp"

#include <cmath>
#include <map>
#include <thread>

namespace hyperlora::harness {

using nodes::EndDevice;

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kSpecSalt = 0xD000'0000ULL;
constexpr std::uint64_t kDeviceSalt = 0xE000'0000ULL;
constexpr std::uint64_t kPrejoinSalt = 0xB007ULL;
constexpr std::uint64_t kRogueSalt = 0xBAD0'0000ULL;

DevAddr prejoined_addr(std::uint32_t index) { return dev_addr_from((0x40u << 24) | (index + 1)); }

/// Everything about a device that must be identical across topologies.
struct Trace {
  DeviceSpec spec;
  SimTime first_delay = 0;
};

Trace device_trace(const ScenarioConfig& c, std::uint32_t i, SimTime duration, bool joins) {
  crypto::Rng r(mix(c.seed, kSpecSalt + i));
  Trace t;
  t.spec.dev_eui = {0x70, 0xb3, 0xd5, 0x7e, static_cast<std::uint8_t>(i >> 24),
                    static_cast<std::uint8_t>(i >> 16), static_cast<std::uint8_t>(i >> 8),
                    static_cast<std::uint8_t>(i)};
  t.spec.app_eui = {0x70, 0xb3, 0xd5, 0x7e, 0xf0, 0x00, 0x00, 0x01};
  t.spec.app_key = crypto::SymmetricKey::random(r);
  t.spec.gateway = static_cast<int>(i % static_cast<std::uint32_t>(c.n_gateways));
  t.spec.seed = mix(c.seed, kDeviceSalt + i);
  auto& b = t.spec.behaviour;
  b.join_interval_min = c.effective_join_interval_min();
  b.join_interval_max = c.effective_join_interval_max();
  b.join_timeout = c.join_timeout;
  b.uplink_interval_min = c.uplink_interval_min;
  b.uplink_interval_max = c.uplink_interval_max;
  b.uplink_timeout = c.uplink_timeout;
  b.payload_bytes = c.payload_bytes;
  b.stop_at = duration;
  SimTime hi = joins ? b.join_interval_min : b.uplink_interval_max;
  t.first_delay = std::uniform_int_distribution<SimTime>(0, hi)(r);
  return t;
}

SimTime drain_time(const ScenarioConfig& c, bool joins) {
  auto timeout = joins ? c.join_timeout : c.uplink_timeout;
  return timeout + 2 * c.consensus.batch.batch_timeout + 2 * c.consensus.retry_backoff + 10 * kSecond;
}

std::string link_name(const std::map<sim::NodeId, std::string>& names, sim::NodeId a, sim::NodeId b) {
  auto name = [&](sim::NodeId id) {
    auto it = names.find(id);
    return it == names.end() ? "node-" + std::to_string(id) : it->second;
  };
  return name(a) + "->" + name(b);
}

RunResult collect(World& w, const ScenarioConfig& c, SimTime duration) {
  RunResult r;
  r.config = c;
  r.duration = duration;
  r.end_time = w.engine().now();
  r.requests = w.metrics().requests();

  std::map<sim::NodeId, std::string> names;
  for (const auto* n : w.all_nodes()) names[n->id()] = n->name();
  for (const auto& [key, l] : w.engine().links())
    r.links.push_back({link_name(names, key.first, key.second), l.offered_bytes, l.offered_msgs,
                       l.delivered_msgs, l.lost_msgs});
  std::sort(r.links.begin(), r.links.end(), [](const auto& a, const auto& b) { return a.name < b.name; });

  auto row = [](const nodes::Node& n, std::uint64_t drops) {
    return NodeRow{n.name(), n.work(), n.messages_received(), drops};
  };
  r.nodes.push_back(row(w.n_orderer(), w.n_orderer().rejected_txs()));
  r.nodes.push_back(row(w.a_orderer(), w.a_orderer().rejected_txs()));
  for (int m = 0; m < c.n_servers; ++m) {
    r.nodes.push_back(row(w.server(m), w.server(m).drops().total()));
    r.server_events += w.server(m).messages_received();
  }
  for (int k = 0; k < c.n_gateways; ++k) r.nodes.push_back(row(w.gateway(k), w.gateway(k).drops().total()));

  auto seconds = static_cast<std::size_t>(r.end_time / kSecond) + 1;
  r.completed_per_s.assign(seconds, 0);
  r.committed_per_s.assign(seconds, 0);
  for (const auto& req : r.requests)
    if (req.kind == nodes::RequestKind::uplink && req.status == nodes::RequestStatus::completed)
      ++r.completed_per_s[static_cast<std::size_t>(req.ended / kSecond)];
  for (const auto& block : w.a_orderer().ledger().blocks()) {
    for (const auto& tx : block.body) {
      r.committed_payloads.push_back(nodes::AppRecord::decode(tx.data));
      auto s = static_cast<std::size_t>(tx.t / 1000);
      if (s < r.committed_per_s.size()) ++r.committed_per_s[s];
    }
  }
  std::sort(r.committed_payloads.begin(), r.committed_payloads.end());

  r.gateway_to_cloud_bytes = w.gateway_to_cloud_bytes();
  r.server_work_units = w.server_work_units();
  r.gateway_work_units = w.gateway_work_units();
  r.n_height = w.n_orderer().ledger().height();
  r.a_height = w.a_orderer().ledger().height();
  r.trace_digest = w.engine().trace_digest();
  r.n_chain = ledger::encode_chain(w.n_orderer().ledger());
  r.a_chain = ledger::encode_chain(w.a_orderer().ledger());
  r.keys = ledger::encode_directory(w.directory());
  return r;
}

/// Pre-joined population for the uplink experiments. Devices in each
/// gateway's share are authorized in index order up to the fraction; the
/// rest carry random keys and reuse the DevAddr of an authorized neighbour.
void sever(World& w, const ScenarioConfig& c) {
  if (!c.severed_gateway) return;
  auto gw = w.gateway(*c.severed_gateway).id();
  for (std::size_t i = 0; i < w.device_count(); ++i)
    if (w.device(i).gateway() == gw) w.set_air_loss(w.device(i), 1.0);
}

RunResult run_uplinks(const ScenarioConfig& c) {
  c.validate();
  World w(c.world_config());
  const auto duration = c.effective_duration();
  const auto n = static_cast<std::uint32_t>(c.n_devices);
  const auto K = static_cast<std::uint32_t>(c.n_gateways);
  const auto per_gateway = n / K;
  const auto n_auth = static_cast<std::uint32_t>(std::llround(c.effective_authorized_fraction() * per_gateway));

  std::vector<Trace> traces;
  std::vector<EndDevice*> authorized;
  for (std::uint32_t i = 0; i < n; ++i) {
    traces.push_back(device_trace(c, i, duration, false));
    auto& dev = w.add_device(traces.back().spec);
    if (i / K < n_auth) {
      w.register_otaa(dev);
      authorized.push_back(&dev);
    }
  }
  w.prejoin(authorized, mix(c.seed, kPrejoinSalt));
  sever(w, c);

  for (std::uint32_t i = 0; i < n; ++i) {
    auto rank = i / K;
    if (rank < n_auth) continue;
    crypto::Rng r(mix(c.seed, kRogueSalt + i));
    DevAddr addr = n_auth > 0 ? prejoined_addr(((rank - n_auth) % n_auth) * K + i % K)
                              : dev_addr_from((0x7fu << 24) | (i + 1));
    w.device(i).set_session(nodes::Session{addr, crypto::SymmetricKey::random(r),
                                           crypto::SymmetricKey::random(r), 0, std::nullopt},
                            nodes::DeviceMode::abp);
  }
  for (std::uint32_t i = 0; i < n; ++i) w.device(i).start_uplink_loop(traces[i].first_delay);

  w.run_until(duration + drain_time(c, false));
  return collect(w, c, duration);
}

}  // namespace

RunResult run_experiment_1(const ScenarioConfig& config) {
  if (config.experiment != 1) throw ConfigError("run_experiment_1 needs experiment = 1");
  config.validate();
  World w(config.world_config());
  const auto duration = config.effective_duration();
  std::vector<SimTime> first;
  for (std::uint32_t i = 0; i < config.n_devices; ++i) {
    auto t = device_trace(config, i, duration, true);
    auto& dev = w.add_device(t.spec);
    w.register_otaa(dev);
    first.push_back(t.first_delay);
  }
  sever(w, config);
  for (std::size_t i = 0; i < first.size(); ++i) w.device(i).start_join_loop(first[i]);
  w.run_until(duration + drain_time(config, true));
  return collect(w, config, duration);
}

RunResult run_experiment_2(const ScenarioConfig& config) {
  if (config.experiment != 2) throw ConfigError("run_experiment_2 needs experiment = 2");
  return run_uplinks(config);
}

RunResult run_experiment_3(const ScenarioConfig& config) {
  if (config.experiment != 3) throw ConfigError("run_experiment_3 needs experiment = 3");
  return run_uplinks(config);
}

RunResult run_scenario(const ScenarioConfig& config) {
  switch (config.experiment) {
    case 1: return run_experiment_1(config);
    case 2: return run_experiment_2(config);
    case 3: return run_experiment_3(config);
  }
  throw ConfigError("experiment must be 1, 2 or 3");
}

Comparison run_comparison(const ScenarioConfig& config, bool parallel) {
  auto edge = config;
  edge.mode = nodes::Topology::edge;
  auto trad = config;
  trad.mode = nodes::Topology::traditional;
  edge.validate();
  Comparison c;
  if (parallel) {
    std::exception_ptr err;
    std::thread worker([&] {
      try {
        c.traditional = run_scenario(trad);
      } catch (...) {
        err = std::current_exception();
      }
    });
    try {
      c.edge = run_scenario(edge);
    } catch (...) {
      worker.join();
      throw;
    }
    worker.join();
    if (err) std::rethrow_exception(err);
  } else {
    c.edge = run_scenario(edge);
    c.traditional = run_scenario(trad);
  }
  return c;
}

}  // namespace hyperlora::harness
