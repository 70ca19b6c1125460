#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hyperlora/harness.hpp"

namespace hyperlora::harness {

using nodes::RequestKind;
using nodes::RequestStatus;

namespace {

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

double ms(SimTime t) { return static_cast<double>(t) / kMillisecond; }

std::vector<std::uint64_t> cumulative(const std::vector<std::uint64_t>& v, std::size_t len) {
  std::vector<std::uint64_t> out(len, 0);
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < len; ++i) {
    if (i < v.size()) acc += v[i];
    out[i] = acc;
  }
  return out;
}

}  // namespace

LatencyStats latency_stats(std::vector<SimTime> samples) {
  LatencyStats s;
  s.count = samples.size();
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  auto rank = [&](double q) {
    auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
    return ms(samples[std::clamp<std::size_t>(idx, 1, samples.size()) - 1]);
  };
  s.min_ms = ms(samples.front());
  s.max_ms = ms(samples.back());
  s.median_ms = rank(0.5);
  s.p95_ms = rank(0.95);
  long double sum = 0;
  for (auto v : samples) sum += v;
  s.mean_ms = static_cast<double>(sum / samples.size() / kMillisecond);
  return s;
}

double reduction_pct(double traditional, double edge) {
  if (traditional == 0) return 0.0;
  return (traditional - edge) / traditional * 100.0;
}

RequestCounts RunResult::counts(RequestKind kind) const {
  RequestCounts c;
  for (const auto& r : requests) {
    if (r.kind != kind) continue;
    ++c.issued;
    switch (r.status) {
      case RequestStatus::completed: ++c.completed; break;
      case RequestStatus::failed: ++c.failed; break;
      case RequestStatus::in_flight: ++c.in_flight; break;
    }
  }
  return c;
}

LatencyStats RunResult::latency(RequestKind kind) const {
  std::vector<SimTime> samples;
  for (const auto& r : requests)
    if (r.kind == kind && r.status == RequestStatus::completed) samples.push_back(r.ended - r.issued);
  return latency_stats(std::move(samples));
}

double RunResult::joins_within(SimTime bound) const {
  std::uint64_t issued = 0, ok = 0;
  for (const auto& r : requests) {
    if (r.kind != RequestKind::join) continue;
    ++issued;
    if (r.status == RequestStatus::completed && r.ended - r.issued <= bound) ++ok;
  }
  return issued ? static_cast<double>(ok) / static_cast<double>(issued) : 0.0;
}

double RunResult::steady_throughput() const {
  SimTime from = steady_start_clamped();
  std::uint64_t n = 0;
  for (const auto& r : requests)
    if (r.kind == RequestKind::uplink && r.status == RequestStatus::completed && r.ended >= from &&
        r.ended < duration)
      ++n;
  return static_cast<double>(n) / (static_cast<double>(duration - from) / kSecond);
}

SimTime RunResult::steady_start_clamped() const {
  return config.steady_start < duration ? config.steady_start : 0;
}

double Comparison::bandwidth_reduction_pct() const {
  return reduction_pct(static_cast<double>(traditional.gateway_to_cloud_bytes),
                       static_cast<double>(edge.gateway_to_cloud_bytes));
}

double Comparison::server_work_reduction_pct() const {
  return reduction_pct(static_cast<double>(traditional.server_work_units),
                       static_cast<double>(edge.server_work_units));
}

double Comparison::cumulative_throughput_gap_pct() const {
  auto len = std::max(edge.completed_per_s.size(), traditional.completed_per_s.size());
  auto e = cumulative(edge.completed_per_s, len);
  auto t = cumulative(traditional.completed_per_s, len);
  if (len == 0 || t.back() == 0) return e.empty() || e.back() == 0 ? 0.0 : 100.0;
  std::uint64_t gap = 0;
  for (std::size_t i = 0; i < len; ++i) gap = std::max(gap, e[i] > t[i] ? e[i] - t[i] : t[i] - e[i]);
  return static_cast<double>(gap) / static_cast<double>(t.back()) * 100.0;
}

double Comparison::steady_throughput_gap_pct() const {
  auto t = traditional.steady_throughput();
  if (t == 0) return edge.steady_throughput() == 0 ? 0.0 : 100.0;
  return std::abs(edge.steady_throughput() - t) / t * 100.0;
}

std::string summary_text(const RunResult& r) {
  std::ostringstream o;
  const auto& c = r.config;
  o << "experiment " << c.experiment << "\n";
  o << "mode " << nodes::to_string(c.mode) << "\n";
  o << "devices " << c.n_devices << "\n";
  o << "gateways " << c.n_gateways << "\n";
  o << "servers " << c.n_servers << "\n";
  o << "authorized_fraction " << fixed(c.effective_authorized_fraction(), 2) << "\n";
  o << "consensus " << (c.consensus.mode == consensus::Mode::solo ? "solo" : "pbft") << "\n";
  o << "seed " << c.seed << "\n";
  o << "duration_s " << fixed(static_cast<double>(r.duration) / kSecond, 1) << "\n";
  o << "end_s " << fixed(static_cast<double>(r.end_time) / kSecond, 1) << "\n";
  for (auto kind : {RequestKind::join, RequestKind::uplink}) {
    auto n = r.counts(kind);
    auto s = r.latency(kind);
    std::string k = nodes::to_string(kind);
    o << k << "_issued " << n.issued << "\n";
    o << k << "_completed " << n.completed << "\n";
    o << k << "_failed " << n.failed << "\n";
    o << k << "_in_flight " << n.in_flight << "\n";
    o << k << "_latency_ms min " << fixed(s.min_ms) << " mean " << fixed(s.mean_ms) << " median "
      << fixed(s.median_ms) << " p95 " << fixed(s.p95_ms) << " max " << fixed(s.max_ms) << "\n";
  }
  o << "joins_within_5s_pct " << fixed(r.joins_within(5 * kSecond) * 100.0, 2) << "\n";
  o << "throughput_uplinks_per_s " << fixed(r.steady_throughput()) << "\n";
  o << "committed_app_txs " << r.committed_payloads.size() << "\n";
  o << "network_ledger_height " << r.n_height << "\n";
  o << "application_ledger_height " << r.a_height << "\n";
  o << "gateway_to_cloud_bytes " << r.gateway_to_cloud_bytes << "\n";
  o << "server_work_units " << r.server_work_units << "\n";
  o << "gateway_work_units " << r.gateway_work_units << "\n";
  char trace[32];
  std::snprintf(trace, sizeof trace, "%016llx", static_cast<unsigned long long>(r.trace_digest));
  o << "trace " << trace << "\n";
  return o.str();
}

std::string comparison_text(const Comparison& c) {
  std::ostringstream o;
  o << "experiment " << c.edge.config.experiment << "\n";
  o << "devices " << c.edge.config.n_devices << "\n";
  o << "seed " << c.edge.config.seed << "\n";
  o << "gateway_to_cloud_bytes edge " << c.edge.gateway_to_cloud_bytes << " traditional "
    << c.traditional.gateway_to_cloud_bytes << "\n";
  o << "bandwidth_reduction_pct " << fixed(c.bandwidth_reduction_pct(), 2) << "\n";
  o << "server_work_units edge " << c.edge.server_work_units << " traditional "
    << c.traditional.server_work_units << "\n";
  o << "server_work_reduction_pct " << fixed(c.server_work_reduction_pct(), 2) << "\n";
  o << "throughput_uplinks_per_s edge " << fixed(c.edge.steady_throughput()) << " traditional "
    << fixed(c.traditional.steady_throughput()) << "\n";
  o << "steady_throughput_gap_pct " << fixed(c.steady_throughput_gap_pct()) << "\n";
  o << "cumulative_throughput_gap_pct " << fixed(c.cumulative_throughput_gap_pct()) << "\n";
  o << "committed_app_txs edge " << c.edge.committed_payloads.size() << " traditional "
    << c.traditional.committed_payloads.size() << "\n";
  o << "payload_multisets_identical " << (c.payloads_identical() ? "yes" : "no") << "\n";
  return o.str();
}

std::string requests_csv(const RunResult& r) {
  std::string out = "kind,device,issued_us,completed_us,status,latency_us\n";
  for (const auto& q : r.requests) {
    out += nodes::to_string(q.kind);
    out += ',' + std::to_string(q.device) + ',' + std::to_string(q.issued) + ',';
    if (q.status != RequestStatus::in_flight) out += std::to_string(q.ended);
    out += ',';
    out += nodes::to_string(q.status);
    out += ',';
    if (q.status != RequestStatus::in_flight) out += std::to_string(q.ended - q.issued);
    out += '\n';
  }
  return out;
}

std::string links_csv(const RunResult& r) {
  std::string out = "link,offered_bytes,delivered_msgs,lost_msgs\n";
  for (const auto& l : r.links)
    out += l.name + ',' + std::to_string(l.offered_bytes) + ',' + std::to_string(l.delivered_msgs) + ',' +
           std::to_string(l.lost_msgs) + '\n';
  return out;
}

void emit_metrics(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "requests.csv", requests_csv(r));
  write_file(dir / "links.csv", links_csv(r));

  std::string tp = "second,completed_uplinks,committed_app_txs\n";
  for (std::size_t s = 0; s < r.completed_per_s.size(); ++s)
    tp += std::to_string(s) + ',' + std::to_string(r.completed_per_s[s]) + ',' +
          std::to_string(r.committed_per_s[s]) + '\n';
  write_file(dir / "throughput.csv", tp);

  std::string nodes_csv = "node,parse,mic,query,tx_build,work_units,messages_received,drops\n";
  for (const auto& n : r.nodes)
    nodes_csv += n.name + ',' + std::to_string(n.work.parse) + ',' + std::to_string(n.work.mic) + ',' +
                 std::to_string(n.work.query) + ',' + std::to_string(n.work.tx_build) + ',' +
                 std::to_string(n.work.units()) + ',' + std::to_string(n.messages_received) + ',' +
                 std::to_string(n.drops) + '\n';
  write_file(dir / "nodes.csv", nodes_csv);

  write_file(dir / "summary.txt", summary_text(r));
  write_file(dir / "network.chain", r.n_chain);
  write_file(dir / "application.chain", r.a_chain);
  write_file(dir / "keys.bin", r.keys);
}

void emit_comparison(const Comparison& c, const std::filesystem::path& dir) {
  emit_metrics(c.edge, dir / "edge");
  emit_metrics(c.traditional, dir / "traditional");
  write_file(dir / "comparison.txt", comparison_text(c));
}

}  // namespace hyperlora::harness
