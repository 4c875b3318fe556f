#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dbpeq/bench.hpp"

namespace dbpeq {

/// Exit codes of `dbpeq`.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAllFailed = 3;

/// Flat run configuration as read from JSON and command-line flags.
struct CliConfig {
  SystemConfig cfg;
  std::vector<std::string> algorithms{"zf", "lmmse", "bdac", "sdr", "cdr", "bcd", "bcd-lrd"};
  std::vector<double> snr{0.0, 5.0, 10.0, 15.0, 20.0};
  int trials = 50;
  int n_sym = 0;
  int T = 4;
  double tol = 0.0;
  int r = 0;
  double tau = 0.05;
  std::string out;
  int workers = 0;
  bool timing = false;

  RunSpec to_run_spec() const;
};

/// Layers a flat JSON object over `base`. Unknown keys and ill-typed values
/// throw ConfigError naming the key.
CliConfig apply_config(const nlohmann::json& j, CliConfig base);
/// Every key apply_config understands, filled from `c`.
nlohmann::json dump_config(const CliConfig& c);

/// "zf,lmmse" -> {"zf", "lmmse"}; rejects unknown names.
std::vector<std::string> split_algorithm_list(const std::string& list);

CliConfig full_scale(CliConfig c);

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace dbpeq
