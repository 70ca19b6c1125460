#pragma once

// Experiment scenarios, device-population emulation, metric collection and
// output files.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hyperlora/world.hpp"

namespace hyperlora::harness {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Inputs of one run. Unset optionals take the per-experiment default.
struct ScenarioConfig {
  int experiment = 0;
  nodes::Topology mode = nodes::Topology::edge;
  long long n_devices = 100;
  int n_gateways = 4;
  int n_servers = 2;
  std::optional<double> authorized_fraction;

  SimTime join_interval_min = 600 * kSecond;
  SimTime join_interval_max = 7200 * kSecond;
  SimTime join_timeout = 300 * kSecond;
  SimTime uplink_interval_min = 13 * kSecond;
  SimTime uplink_interval_max = 17 * kSecond;
  SimTime uplink_timeout = 30 * kSecond;
  std::size_t payload_bytes = 16;

  consensus::ConsensusConfig consensus;

  std::uint64_t seed = 1;
  std::optional<SimTime> duration;
  SimTime steady_start = 60 * kSecond;
  int time_compress = 1;

  SimTime lora_latency = 400 * kMillisecond;
  SimTime backhaul_min = 5 * kMillisecond;
  SimTime backhaul_max = 20 * kMillisecond;
  double air_loss = 0.0;
  double backhaul_loss = 0.0;

  SimTime us_per_work_unit = 0;
  SimTime gateway_join_delay = 0;
  /// Air links of every device on this gateway drop all traffic.
  std::optional<int> severed_gateway;

  /// Sets one flat key (e.g. "consensus.batch_timeout_ms"). Throws ConfigError.
  void set(std::string_view key, std::string_view value);
  /// Throws ConfigError.
  void validate() const;

  double effective_authorized_fraction() const;
  /// Simulated time during which devices issue requests.
  SimTime effective_duration() const;
  SimTime effective_join_interval_min() const { return join_interval_min / time_compress; }
  SimTime effective_join_interval_max() const { return join_interval_max / time_compress; }
  WorldConfig world_config() const;
};

/// Flat `key = value` lines; `#` starts a comment. Throws ConfigError.
void apply_config_text(ScenarioConfig& config, std::string_view text);
void apply_config_file(ScenarioConfig& config, const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct LatencyStats {
  std::size_t count = 0;
  double min_ms = 0;
  double mean_ms = 0;
  double median_ms = 0;
  double p95_ms = 0;
  double max_ms = 0;
};

/// Nearest-rank percentiles over samples in µs.
LatencyStats latency_stats(std::vector<SimTime> samples);

/// (traditional - edge) / traditional * 100; 0 when traditional is 0.
double reduction_pct(double traditional, double edge);

struct RequestCounts {
  std::uint64_t issued = 0;
  std::uint64_t completed = 0;
  std::uint64_t failed = 0;
  std::uint64_t in_flight = 0;
};

struct LinkRow {
  std::string name;
  std::uint64_t offered_bytes = 0;
  std::uint64_t offered_msgs = 0;
  std::uint64_t delivered_msgs = 0;
  std::uint64_t lost_msgs = 0;
};

struct NodeRow {
  std::string name;
  nodes::WorkCounters work;
  std::uint64_t messages_received = 0;
  std::uint64_t drops = 0;
};

struct RunResult {
  ScenarioConfig config;
  SimTime duration = 0;
  SimTime end_time = 0;
  std::vector<nodes::RequestRecord> requests;
  std::vector<LinkRow> links;
  std::vector<NodeRow> nodes;
  /// Completed uplinks per simulated second, by completion time.
  std::vector<std::uint64_t> completed_per_s;
  /// Application transactions per second, by transaction timestamp.
  std::vector<std::uint64_t> committed_per_s;
  /// Sorted multiset of committed application records.
  std::vector<nodes::AppRecord> committed_payloads;
  std::uint64_t gateway_to_cloud_bytes = 0;
  std::uint64_t server_work_units = 0;
  std::uint64_t gateway_work_units = 0;
  std::uint64_t server_events = 0;
  std::uint64_t n_height = 0;
  std::uint64_t a_height = 0;
  std::uint64_t trace_digest = 0;
  Bytes n_chain;
  Bytes a_chain;
  Bytes keys;

  RequestCounts counts(nodes::RequestKind kind) const;
  LatencyStats latency(nodes::RequestKind kind) const;
  /// Share of issued joins that completed within the bound.
  double joins_within(SimTime bound) const;
  /// Completed uplinks per second over [steady_start, duration).
  double steady_throughput() const;
  /// Window start; 0 when the run is shorter than the warm-up.
  SimTime steady_start_clamped() const;
};

RunResult run_experiment_1(const ScenarioConfig& config);
RunResult run_experiment_2(const ScenarioConfig& config);
RunResult run_experiment_3(const ScenarioConfig& config);
/// Dispatches on config.experiment.
RunResult run_scenario(const ScenarioConfig& config);

struct Comparison {
  RunResult edge;
  RunResult traditional;

  double bandwidth_reduction_pct() const;
  double server_work_reduction_pct() const;
  bool payloads_identical() const { return edge.committed_payloads == traditional.committed_payloads; }
  /// Largest gap between the cumulative completed-uplink curves, as a share
  /// of the traditional total.
  double cumulative_throughput_gap_pct() const;
  double steady_throughput_gap_pct() const;
};

/// Runs the scenario in both topologies on the same trace.
Comparison run_comparison(const ScenarioConfig& config, bool parallel = false);

std::string summary_text(const RunResult& r);
std::string comparison_text(const Comparison& c);
std::string requests_csv(const RunResult& r);
std::string links_csv(const RunResult& r);

/// requests.csv, links.csv, throughput.csv, nodes.csv, summary.txt,
/// network.chain, application.chain and keys.bin.
void emit_metrics(const RunResult& r, const std::filesystem::path& dir);
/// edge/ and traditional/ subdirectories plus comparison.txt.
void emit_comparison(const Comparison& c, const std::filesystem::path& dir);

}  // namespace hyperlora::harness
