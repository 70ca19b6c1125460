// hyperlora: run experiments, verify chain dumps, decode LoRa frames.
//
// Exit codes: 0 success, 1 internal failure or corrupt chain, 2 usage or
// configuration error.

#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>

#include "CLI11.hpp"
#include "hyperlora/harness.hpp"

using namespace hyperlora;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct RunFlags {
  std::optional<int> experiment;
  std::optional<long long> devices;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> time_compress;
  std::string out = "out";
  std::string config;
  bool compare = false;
  bool parallel = false;
};

int do_run(const RunFlags& f) {
  harness::ScenarioConfig cfg;
  if (!f.config.empty()) harness::apply_config_file(cfg, f.config);
  if (f.experiment) cfg.experiment = *f.experiment;
  if (f.devices) cfg.n_devices = *f.devices;
  if (f.mode) cfg.set("mode", *f.mode);
  if (f.seed) cfg.seed = *f.seed;
  if (f.time_compress) cfg.time_compress = *f.time_compress;
  cfg.validate();

  if (f.compare) {
    auto cmp = harness::run_comparison(cfg, f.parallel);
    harness::emit_comparison(cmp, f.out);
    std::cout << "[edge]\n"
              << harness::summary_text(cmp.edge) << "\n[traditional]\n"
              << harness::summary_text(cmp.traditional) << "\n[comparison]\n"
              << harness::comparison_text(cmp);
  } else {
    auto r = harness::run_scenario(cfg);
    harness::emit_metrics(r, f.out);
    std::cout << harness::summary_text(r);
  }
  return kOk;
}

Bytes read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw harness::ConfigError("cannot open " + path);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int do_verify(const std::string& file, std::string keys) {
  if (keys.empty()) keys = (std::filesystem::path(file).parent_path() / "keys.bin").string();
  auto dir = ledger::decode_directory(read_all(keys));
  auto data = read_all(file);
  ledger::Ledger chain(ledger::LedgerKind::network);
  try {
    chain = ledger::decode_chain(data, dir);
  } catch (const Error& e) {
    std::cout << "INVALID " << file << ": " << e.what() << "\n";
    return kFailure;
  }
  std::cout << "OK " << file << ": " << chain.height() << " blocks, "
            << (chain.kind() == ledger::LedgerKind::network ? "network" : "application") << " ledger";
  if (auto* tip = chain.tip()) std::cout << ", tip " << tip->hash().hex();
  std::cout << "\n";
  return kOk;
}

int do_decode(const std::string& hex) {
  Bytes bytes;
  try {
    bytes = from_hex(hex);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  try {
    std::cout << lora::describe_frame(bytes);
  } catch (const DecodeError& e) {
    std::cout << "malformed frame: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HyperLoRa simulator"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run an experiment");
  run->add_option("--experiment", rf.experiment, "Experiment 1, 2 or 3")->required();
  run->add_option("--devices", rf.devices, "Number of end-devices");
  run->add_option("--mode", rf.mode, "edge or traditional");
  run->add_option("--seed", rf.seed, "Simulation seed");
  run->add_option("--out", rf.out, "Output directory");
  run->add_option("--config", rf.config, "key=value config file");
  run->add_option("--time-compress", rf.time_compress, "Divide experiment-1 join intervals by k");
  run->add_flag("--compare", rf.compare, "Run edge and traditional on the same trace");
  run->add_flag("--parallel", rf.parallel, "With --compare, run both modes concurrently");

  auto* ledger_cmd = app.add_subcommand("ledger", "Ledger tools");
  ledger_cmd->require_subcommand(1);
  std::string chain_file, keys_file;
  auto* verify = ledger_cmd->add_subcommand("verify", "Validate a chain dump");
  verify->add_option("file", chain_file, "Chain dump")->required();
  verify->add_option("--keys", keys_file, "Key directory file (default: keys.bin beside the dump)");

  auto* frame_cmd = app.add_subcommand("frame", "Frame tools");
  frame_cmd->require_subcommand(1);
  std::string hex;
  auto* decode = frame_cmd->add_subcommand("decode", "Decode a hex-encoded LoRa frame");
  decode->add_option("hex", hex, "Frame bytes in hex")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return do_run(rf);
    if (*verify) return do_verify(chain_file, keys_file);
    if (*decode) return do_decode(hex);
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
