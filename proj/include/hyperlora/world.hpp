#pragma once

// A complete simulated deployment: one engine, the key directory, the two
// channel orderers, M servers, K gateways and any number of devices, wired
// together with air and backhaul links.
//
// Node ids: 0 = network-channel orderer, 1 = application-channel orderer,
// then servers, gateways, and devices in creation order.

#include <memory>
#include <vector>

#include "hyperlora/nodes.hpp"

namespace hyperlora {

struct WorldConfig {
  nodes::Topology topology = nodes::Topology::edge;
  int n_gateways = 4;
  int n_servers = 2;
  consensus::ConsensusConfig consensus;
  SimTime lora_latency = 400 * kMillisecond;
  SimTime backhaul_min = 5 * kMillisecond;
  SimTime backhaul_max = 20 * kMillisecond;
  double air_loss = 0.0;
  double backhaul_loss = 0.0;
  std::uint64_t seed = 1;
  NetId net_id{0x00, 0x00, 0x13};
  SimTime us_per_work_unit = 0;
  SimTime gateway_join_delay = 0;

  /// Throws ArgumentError.
  void validate() const;
};

struct DeviceSpec {
  DevEui dev_eui{};
  AppEui app_eui{};
  crypto::SymmetricKey app_key;
  int gateway = 0;
  std::uint64_t seed = 0;
  nodes::DeviceBehaviour behaviour;
};

class World {
 public:
  explicit World(WorldConfig config);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  const WorldConfig& config() const { return config_; }
  nodes::Engine& engine() { return engine_; }
  const nodes::Engine& engine() const { return engine_; }
  ledger::KeyDirectory& directory() { return directory_; }
  const ledger::KeyDirectory& directory() const { return directory_; }
  nodes::MetricsSink& metrics() { return metrics_; }
  const nodes::MetricsSink& metrics() const { return metrics_; }

  nodes::OrdererNode& n_orderer() { return *n_orderer_; }
  nodes::OrdererNode& a_orderer() { return *a_orderer_; }
  const nodes::OrdererNode& n_orderer() const { return *n_orderer_; }
  const nodes::OrdererNode& a_orderer() const { return *a_orderer_; }
  nodes::NetworkServer& server(int m) { return *servers_.at(m); }
  const nodes::NetworkServer& server(int m) const { return *servers_.at(m); }
  nodes::Gateway& gateway(int k) { return *gateways_.at(k); }
  const nodes::Gateway& gateway(int k) const { return *gateways_.at(k); }
  nodes::EndDevice& device(std::size_t i) { return *devices_.at(i); }
  const nodes::EndDevice& device(std::size_t i) const { return *devices_.at(i); }
  std::size_t device_count() const { return devices_.size(); }

  /// Server that fronts gateway k: k mod M.
  int server_for_gateway(int k) const { return k % config_.n_servers; }

  nodes::EndDevice& add_device(const DeviceSpec& spec);
  /// Registers the device's AppKey with the join server that serves it.
  void register_otaa(const nodes::EndDevice& device);
  /// Moves a device to another gateway, creating air links when needed.
  void move_device(nodes::EndDevice& device, int gateway);
  /// Sets the loss rate of both air directions between a device and its gateway.
  void set_air_loss(const nodes::EndDevice& device, double loss);

  /// Completed join handshake for each device without simulating it: fresh
  /// contexts are committed to the network ledger at the current time and
  /// sessions installed. DevAddrs come from a range no join server uses.
  void prejoin(const std::vector<nodes::EndDevice*>& devices, std::uint64_t seed);

  void run_until(SimTime t) { engine_.run_until(t); }

  /// Offered bytes on links from any gateway to any server or orderer.
  std::uint64_t gateway_to_cloud_bytes() const;
  std::uint64_t server_work_units() const;
  std::uint64_t gateway_work_units() const;

  std::vector<const nodes::Node*> all_nodes() const;

 private:
  void backhaul(sim::NodeId a, sim::NodeId b);
  void air(sim::NodeId device, sim::NodeId gateway);
  bool is_gateway(sim::NodeId id) const;
  bool is_cloud(sim::NodeId id) const;

  WorldConfig config_;
  nodes::Engine engine_;
  ledger::KeyDirectory directory_;
  nodes::MetricsSink metrics_;
  nodes::Environment env_;
  std::unique_ptr<nodes::OrdererNode> n_orderer_;
  std::unique_ptr<nodes::OrdererNode> a_orderer_;
  std::vector<std::unique_ptr<nodes::NetworkServer>> servers_;
  std::vector<std::unique_ptr<nodes::Gateway>> gateways_;
  std::vector<std::unique_ptr<nodes::EndDevice>> devices_;
  sim::NodeId next_id_ = 0;
};

}  // namespace hyperlora
