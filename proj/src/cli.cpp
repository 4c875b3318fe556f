#include "dbpeq/cli.hpp"

#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "dbpeq/verify.hpp"

namespace dbpeq {

namespace {

using json = nlohmann::json;

int get_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("config: key '" + key + "' must be an integer");
  return v.get<int>();
}

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config: key '" + key + "' must be a number");
  return v.get<double>();
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config: key '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

RunSpec CliConfig::to_run_spec() const {
  RunSpec spec;
  spec.cfg = cfg;
  for (const auto& name : algorithms) {
    AlgorithmSpec a;
    a.algorithm = parse_algorithm(name);
    a.T = T;
    a.tol = tol;
    a.r = r;
    a.tau = tau;
    spec.algorithms.push_back(a);
  }
  spec.snr_grid = snr;
  spec.trials = trials;
  spec.n_sym = n_sym;
  spec.out_path = out;
  spec.workers = workers;
  spec.timing = timing;
  return spec;
}

std::vector<std::string> split_algorithm_list(const std::string& list) {
  std::vector<std::string> names;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = CLI::detail::trim_copy(item);
    if (item.empty()) continue;
    parse_algorithm(item);
    names.push_back(item);
  }
  if (names.empty()) throw ConfigError("algorithms: list is empty");
  return names;
}

CliConfig full_scale(CliConfig c) {
  c.cfg.M = 128;
  c.cfg.C = 8;
  c.cfg.K = 8;
  c.cfg.N = 192;
  c.trials = 100;
  return c;
}

CliConfig apply_config(const json& j, CliConfig c) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "M") c.cfg.M = get_int(v, key);
    else if (key == "K") c.cfg.K = get_int(v, key);
    else if (key == "C") c.cfg.C = get_int(v, key);
    else if (key == "N") c.cfg.N = get_int(v, key);
    else if (key == "Es") c.cfg.Es = get_double(v, key);
    else if (key == "iot") c.cfg.iot_db = get_double(v, key);
    else if (key == "n_interf") c.cfg.n_interf = get_int(v, key);
    else if (key == "ncoh") c.cfg.n_coh = get_int(v, key);
    else if (key == "modulation") c.cfg.modulation = parse_modulation(get_string(v, key));
    else if (key == "channel") c.cfg.channel_model = parse_channel_model(get_string(v, key));
    else if (key == "seed") {
      if (!v.is_number_unsigned()) throw ConfigError("config: key 'seed' must be a non-negative integer");
      c.cfg.seed = v.get<std::uint64_t>();
    } else if (key == "snr") {
      c.snr.clear();
      if (v.is_array()) {
        for (const auto& x : v) c.snr.push_back(get_double(x, key));
      } else {
        c.snr.push_back(get_double(v, key));
      }
    } else if (key == "algorithms") {
      if (v.is_array()) {
        std::string joined;
        for (const auto& x : v) joined += get_string(x, key) + ",";
        c.algorithms = split_algorithm_list(joined);
      } else {
        c.algorithms = split_algorithm_list(get_string(v, key));
      }
    }
    else if (key == "trials") c.trials = get_int(v, key);
    else if (key == "n_sym") c.n_sym = get_int(v, key);
    else if (key == "T") c.T = get_int(v, key);
    else if (key == "tol") c.tol = get_double(v, key);
    else if (key == "r") c.r = get_int(v, key);
    else if (key == "tau") c.tau = get_double(v, key);
    else if (key == "out") c.out = get_string(v, key);
    else if (key == "workers") c.workers = get_int(v, key);
    else if (key == "timing") {
      if (!v.is_boolean()) throw ConfigError("config: key 'timing' must be a boolean");
      c.timing = v.get<bool>();
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  return c;
}

json dump_config(const CliConfig& c) {
  json j;
  j["M"] = c.cfg.M;
  j["K"] = c.cfg.K;
  j["C"] = c.cfg.C;
  j["N"] = c.cfg.N;
  j["Es"] = c.cfg.Es;
  j["iot"] = c.cfg.iot_db;
  j["n_interf"] = c.cfg.n_interf;
  j["ncoh"] = c.cfg.n_coh;
  j["modulation"] = to_string(c.cfg.modulation);
  j["channel"] = to_string(c.cfg.channel_model);
  j["seed"] = c.cfg.seed;
  j["snr"] = c.snr;
  j["algorithms"] = c.algorithms;
  j["trials"] = c.trials;
  j["n_sym"] = c.n_sym;
  j["T"] = c.T;
  j["tol"] = c.tol;
  j["r"] = c.r;
  j["tau"] = c.tau;
  j["out"] = c.out;
  j["timing"] = c.timing;
  return j;
}

namespace {

CliConfig load_config_file(const std::string& path, CliConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return apply_config(j, base);
}

struct RunFlags {
  std::string config_path;
  std::string dump_config_path;
  std::string dump_messages;
  bool full = false;
  CliConfig values;  // flag targets; applied only when given
  std::string algorithms;
  std::string channel;
  std::string modulation;
  std::vector<std::function<void(CliConfig&)>> overrides;
};

template <typename T, typename Set>
CLI::Option* override_option(CLI::App* app, RunFlags& flags, const std::string& name, T& target,
                             const std::string& help, Set set) {
  CLI::Option* opt = app->add_option(name, target, help);
  flags.overrides.push_back([opt, &target, set](CliConfig& c) {
    if (opt->count() > 0) set(c, target);
  });
  return opt;
}

int cmd_run(const RunFlags& flags, std::ostream& out, std::ostream& err) {
  CliConfig c;
  if (flags.full) c = full_scale(c);
  if (!flags.config_path.empty()) c = load_config_file(flags.config_path, c);
  for (const auto& apply : flags.overrides) apply(c);

  RunSpec spec = c.to_run_spec();
  spec.dump_messages = flags.dump_messages;
  spec.validate();

  if (!flags.dump_config_path.empty()) {
    std::ofstream os(flags.dump_config_path);
    if (!os) throw ConfigError("dump-config: cannot write '" + flags.dump_config_path + "'");
    os << dump_config(c).dump(2) << '\n';
  }

  const SerReport report = run_sweep(spec);
  if (spec.out_path.empty()) report.write_csv(out);

  std::size_t failed = 0;
  for (const auto& row : report.rows) failed += row.failed ? 1 : 0;
  if (failed > 0) {
    fmt::print(err, "{} of {} rows failed numerically (marked FAIL)\n", failed, report.rows.size());
  }
  if (!spec.out_path.empty()) fmt::print(err, "wrote {} rows to {}\n", report.rows.size(), spec.out_path);
  return failed == report.rows.size() ? kExitAllFailed : kExitOk;
}

int cmd_verify(const VerifyOptions& opts, std::ostream& out) {
  const auto results = run_checks(opts);
  int passed = 0;
  for (const auto& r : results) {
    fmt::print(out, "{} {}: {}\n", r.pass ? "PASS" : "FAIL", r.name, r.detail);
    passed += r.pass ? 1 : 0;
  }
  fmt::print(out, "{}/{} checks passed\n", passed, results.size());
  if (results.empty()) return kExitCheckFailed;
  return passed == static_cast<int>(results.size()) ? kExitOk : kExitCheckFailed;
}

int cmd_bandwidth(const BandwidthParams& p, std::ostream& out) {
  fmt::print(out, "{:<8} {:>14} {:>12} {:>14} {:>12} {}\n", "algo", "formula", "value", "ledger",
             "value", "match");
  bool all = true;
  for (Algorithm a : {Algorithm::kZf, Algorithm::kLmmse, Algorithm::kBdac, Algorithm::kSdr,
                      Algorithm::kCdr, Algorithm::kBcd, Algorithm::kBcdLrd}) {
    const Rational f = bandwidth_formula(a, p);
    const Rational l = simulated_bandwidth(a, p);
    const bool match = f == l;
    all = all && match;
    fmt::print(out, "{:<8} {:>14} {:>12.4f} {:>14} {:>12.4f} {}\n", to_string(a), to_string(f),
               f.value(), to_string(l), l.value(), match ? "yes" : "NO");
  }
  return all ? kExitOk : kExitCheckFailed;
}

}  // namespace

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decentralized LMMSE equalization simulator for massive-MIMO uplink"};
  app.require_subcommand(1);

  RunFlags flags;
  CLI::App* run = app.add_subcommand("run", "Monte-Carlo SER sweep, CSV output");
  run->add_option("--config", flags.config_path, "Flat JSON config file")->check(CLI::ExistingFile);
  run->add_option("--dump-config", flags.dump_config_path,
                  "Write the effective config as JSON (reproduces this run)");
  run->add_option("--dump-messages", flags.dump_messages,
                  "Directory for per-algorithm message logs (first SNR, trial 0)");
  run->add_flag("--full-scale", flags.full, "M=128, C=8, K=8, N=192, 100 trials");
  CliConfig& v = flags.values;
  override_option(run, flags, "--seed", v.cfg.seed, "Master RNG seed",
                  [](CliConfig& c, std::uint64_t x) { c.cfg.seed = x; });
  override_option(run, flags, "--out", v.out, "CSV output path (default: stdout)",
                  [](CliConfig& c, const std::string& x) { c.out = x; });
  override_option(run, flags, "--algorithms", flags.algorithms,
                  "Comma list of zf,lmmse,bdac,sdr,cdr,bcd,bcd-lrd",
                  [](CliConfig& c, const std::string& x) { c.algorithms = split_algorithm_list(x); });
  override_option(run, flags, "--snr", v.snr, "SNR grid in dB (comma list)",
                  [](CliConfig& c, const std::vector<double>& x) { c.snr = x; })
      ->delimiter(',');
  override_option(run, flags, "--iot", v.cfg.iot_db, "Interference over thermal in dB",
                  [](CliConfig& c, double x) { c.cfg.iot_db = x; });
  override_option(run, flags, "--M", v.cfg.M, "BS antennas", [](CliConfig& c, int x) { c.cfg.M = x; });
  override_option(run, flags, "--K", v.cfg.K, "Target UEs", [](CliConfig& c, int x) { c.cfg.K = x; });
  override_option(run, flags, "--C", v.cfg.C, "Antenna clusters (DUs)",
                  [](CliConfig& c, int x) { c.cfg.C = x; });
  override_option(run, flags, "--N", v.cfg.N, "Noise samples", [](CliConfig& c, int x) { c.cfg.N = x; });
  override_option(run, flags, "--T", v.T, "BCD sweeps", [](CliConfig& c, int x) { c.T = x; });
  override_option(run, flags, "--tol", v.tol, "BCD: sweep until relative change < tol (overrides --T)",
                  [](CliConfig& c, double x) { c.tol = x; });
  override_option(run, flags, "--r", v.r, "LRD rank (0: n_interf, negative: singular-value threshold)",
                  [](CliConfig& c, int x) { c.r = x; });
  override_option(run, flags, "--tau", v.tau, "LRD threshold relative to the top singular value",
                  [](CliConfig& c, double x) { c.tau = x; });
  override_option(run, flags, "--ncoh", v.cfg.n_coh, "Coherence block length in symbols",
                  [](CliConfig& c, int x) { c.cfg.n_coh = x; });
  override_option(run, flags, "--n-sym", v.n_sym, "Symbols per trial (default: ncoh)",
                  [](CliConfig& c, int x) { c.n_sym = x; });
  override_option(run, flags, "--n-interf", v.cfg.n_interf, "Interfering UEs (default: K)",
                  [](CliConfig& c, int x) { c.cfg.n_interf = x; });
  override_option(run, flags, "--trials", v.trials, "Channel realizations per SNR point",
                  [](CliConfig& c, int x) { c.trials = x; });
  override_option(run, flags, "--channel", flags.channel, "Channel model: rayleigh or one_ring",
                  [](CliConfig& c, const std::string& x) { c.cfg.channel_model = parse_channel_model(x); })
      ->check(CLI::IsMember({"rayleigh", "one_ring"}));
  override_option(run, flags, "--modulation", flags.modulation, "qpsk or qam16",
                  [](CliConfig& c, const std::string& x) { c.cfg.modulation = parse_modulation(x); });
  override_option(run, flags, "--workers", v.workers, "Worker threads (capped by DBP_EQ_THREADS)",
                  [](CliConfig& c, int x) { c.workers = x; });
  CLI::Option* timing = run->add_flag("--timing", v.timing, "Record wall-clock time per row");
  flags.overrides.push_back([timing](CliConfig& c) {
    if (timing->count() > 0) c.timing = true;
  });

  VerifyOptions verify_opts;
  CLI::App* verify = app.add_subcommand("verify", "Run the built-in property checks");
  verify->add_option("--filter", verify_opts.filter, "Run only checks whose name contains this");
  verify->add_option("--inject-fault", verify_opts.ledger_fault,
                     "Perturb simulated ledgers by this many entries (self-test)");

  BandwidthParams bw{128, 8, 8, 192, 2, 8, 480};
  CLI::App* bandwidth =
      app.add_subcommand("bandwidth", "Closed-form vs simulated entries per symbol");
  bandwidth->add_option("--M", bw.M, "BS antennas");
  bandwidth->add_option("--K", bw.K, "Target UEs");
  bandwidth->add_option("--C", bw.C, "Clusters");
  bandwidth->add_option("--N", bw.N, "Noise samples");
  bandwidth->add_option("--T", bw.T, "BCD sweeps");
  bandwidth->add_option("--r", bw.r, "LRD rank");
  bandwidth->add_option("--ncoh", bw.n_coh, "Coherence block length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(flags, out, err);
    if (verify->parsed()) return cmd_verify(verify_opts, out);
    return cmd_bandwidth(bw, out);
  } catch (const ConfigError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitAllFailed;
  }
}

}  // namespace dbpeq
