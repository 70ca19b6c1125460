#include <charconv>
#include <fstream>
#include <sstream>

#include "hyperlora/harness.hpp"

namespace hyperlora::harness {

namespace {

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
  return out;
}

SimTime seconds(std::string_view key, std::string_view v) {
  return static_cast<SimTime>(parse_number<double>(key, v) * kSecond);
}

SimTime millis(std::string_view key, std::string_view v) {
  return static_cast<SimTime>(parse_number<double>(key, v) * kMillisecond);
}

}  // namespace

void ScenarioConfig::set(std::string_view key, std::string_view value) {
  auto v = trim(value);
  if (key == "experiment") {
    experiment = parse_number<int>(key, v);
  } else if (key == "mode") {
    if (v == "edge") mode = nodes::Topology::edge;
    else if (v == "traditional") mode = nodes::Topology::traditional;
    else throw ConfigError("mode must be edge or traditional");
  } else if (key == "devices") {
    n_devices = parse_number<long long>(key, v);
  } else if (key == "gateways") {
    n_gateways = parse_number<int>(key, v);
  } else if (key == "servers") {
    n_servers = parse_number<int>(key, v);
  } else if (key == "authorized_fraction") {
    authorized_fraction = parse_number<double>(key, v);
  } else if (key == "join.interval_min_s") {
    join_interval_min = seconds(key, v);
  } else if (key == "join.interval_max_s") {
    join_interval_max = seconds(key, v);
  } else if (key == "join.timeout_s") {
    join_timeout = seconds(key, v);
  } else if (key == "uplink.interval_min_s") {
    uplink_interval_min = seconds(key, v);
  } else if (key == "uplink.interval_max_s") {
    uplink_interval_max = seconds(key, v);
  } else if (key == "uplink.timeout_s") {
    uplink_timeout = seconds(key, v);
  } else if (key == "uplink.payload_bytes") {
    payload_bytes = parse_number<std::size_t>(key, v);
  } else if (key == "consensus.mode") {
    if (v == "solo") consensus.mode = consensus::Mode::solo;
    else if (v == "pbft") consensus.mode = consensus::Mode::pbft;
    else throw ConfigError("consensus.mode must be solo or pbft");
  } else if (key == "consensus.batch_timeout_ms") {
    consensus.batch.batch_timeout = millis(key, v);
  } else if (key == "consensus.max_message_count") {
    consensus.batch.max_message_count = parse_number<std::size_t>(key, v);
  } else if (key == "consensus.p") {
    consensus.p = parse_number<int>(key, v);
  } else if (key == "consensus.retry_backoff_ms") {
    consensus.retry_backoff = millis(key, v);
  } else if (key == "sim.seed") {
    seed = parse_number<std::uint64_t>(key, v);
  } else if (key == "sim.duration_s") {
    duration = seconds(key, v);
  } else if (key == "sim.steady_start_s") {
    steady_start = seconds(key, v);
  } else if (key == "sim.time_compress") {
    time_compress = parse_number<int>(key, v);
  } else if (key == "link.lora_latency_ms") {
    lora_latency = millis(key, v);
  } else if (key == "link.backhaul_min_ms") {
    backhaul_min = millis(key, v);
  } else if (key == "link.backhaul_max_ms") {
    backhaul_max = millis(key, v);
  } else if (key == "link.air_loss") {
    air_loss = parse_number<double>(key, v);
  } else if (key == "link.backhaul_loss") {
    backhaul_loss = parse_number<double>(key, v);
  } else if (key == "node.us_per_work_unit") {
    us_per_work_unit = parse_number<SimTime>(key, v);
  } else if (key == "gateway.join_delay_ms") {
    gateway_join_delay = millis(key, v);
  } else if (key == "fault.severed_gateway") {
    severed_gateway = parse_number<int>(key, v);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

void ScenarioConfig::validate() const {
  if (experiment < 1 || experiment > 3) throw ConfigError("experiment must be 1, 2 or 3");
  if (n_devices < 1) throw ConfigError("devices must be positive");
  if (n_gateways < 1 || n_gateways > 64) throw ConfigError("gateways must be in [1, 64]");
  if (n_servers < 1 || n_servers > 64) throw ConfigError("servers must be in [1, 64]");
  if (n_devices % n_gateways != 0)
    throw ConfigError("devices (" + std::to_string(n_devices) + ") must be divisible by gateways (" +
                      std::to_string(n_gateways) + ")");
  if (authorized_fraction) {
    if (*authorized_fraction < 0.0 || *authorized_fraction > 1.0)
      throw ConfigError("authorized_fraction must be in [0, 1]");
    if (experiment != 3 && *authorized_fraction != 1.0)
      throw ConfigError("authorized_fraction must be 1.0 for experiments 1 and 2");
  }
  if (join_interval_min <= 0 || join_interval_max < join_interval_min)
    throw ConfigError("bad join interval range");
  if (uplink_interval_min <= 0 || uplink_interval_max < uplink_interval_min)
    throw ConfigError("bad uplink interval range");
  if (join_timeout <= 0 || uplink_timeout <= 0) throw ConfigError("timeouts must be positive");
  if (payload_bytes > lora::kMaxPayload) throw ConfigError("payload_bytes exceeds frame limit");
  if (consensus.batch.batch_timeout <= 0 || consensus.batch.max_message_count < 1)
    throw ConfigError("bad batch configuration");
  if (consensus.p < 0) throw ConfigError("consensus.p must be >= 0");
  if (consensus.retry_backoff <= 0) throw ConfigError("consensus.retry_backoff_ms must be positive");
  if (duration && *duration <= 0) throw ConfigError("sim.duration_s must be positive");
  if (steady_start < 0) throw ConfigError("sim.steady_start_s must be >= 0");
  if (time_compress < 1) throw ConfigError("time compression must be >= 1");
  if (severed_gateway && (*severed_gateway < 0 || *severed_gateway >= n_gateways))
    throw ConfigError("fault.severed_gateway out of range");
  if (lora_latency < 0 || backhaul_min < 0 || backhaul_max < backhaul_min)
    throw ConfigError("bad link latency");
  if (air_loss < 0 || air_loss > 1 || backhaul_loss < 0 || backhaul_loss > 1)
    throw ConfigError("loss rates must be in [0, 1]");
  if (us_per_work_unit < 0 || gateway_join_delay < 0) throw ConfigError("delays must be >= 0");
}

double ScenarioConfig::effective_authorized_fraction() const {
  if (authorized_fraction) return *authorized_fraction;
  return experiment == 3 ? 0.5 : 1.0;
}

SimTime ScenarioConfig::effective_duration() const {
  if (duration) return *duration;
  return experiment == 1 ? 7200 * kSecond / time_compress : 300 * kSecond;
}

WorldConfig ScenarioConfig::world_config() const {
  WorldConfig w;
  w.topology = mode;
  w.n_gateways = n_gateways;
  w.n_servers = n_servers;
  w.consensus = consensus;
  w.lora_latency = lora_latency;
  w.backhaul_min = backhaul_min;
  w.backhaul_max = backhaul_max;
  w.air_loss = air_loss;
  w.backhaul_loss = backhaul_loss;
  w.seed = seed;
  w.us_per_work_unit = us_per_work_unit;
  w.gateway_join_delay = gateway_join_delay;
  return w;
}

void apply_config_text(ScenarioConfig& config, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    config.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void apply_config_file(ScenarioConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str());
}

}  // namespace hyperlora::harness
