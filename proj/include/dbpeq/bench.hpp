#pragma once

// Monte-Carlo SER/MSE/bandwidth harness. Every algorithm runs through its
// fabric protocol on the same realization and symbol block, so the
// bandwidth column comes from the simulated ledger.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dbpeq/dbpnet.hpp"
#include "dbpeq/scenario.hpp"

namespace dbpeq {

struct AlgorithmSpec {
  Algorithm algorithm = Algorithm::kLmmse;
  /// CSV `algorithm` column; empty means to_string(algorithm).
  std::string label;
  int T = 4;           // BCD sweeps
  double tol = 0.0;    // > 0: BCD sweeps until relative change < tol
  int max_sweeps = 100000;
  int r = 0;           // LRD rank; 0: n_interf, < 0: threshold rule
  double tau = 0.05;   // LRD threshold

  std::string name() const { return label.empty() ? to_string(algorithm) : label; }
};

struct RunSpec {
  SystemConfig cfg;
  std::vector<AlgorithmSpec> algorithms;
  std::vector<double> snr_grid;
  int trials = 50;
  /// Symbols per trial; 0 means one coherence block (cfg.n_coh).
  int n_sym = 0;
  std::string out_path;
  /// 0: hardware concurrency. DBP_EQ_THREADS caps either value.
  int workers = 0;
  bool timing = false;
  /// Directory receiving one message log per algorithm (first SNR, trial 0).
  std::string dump_messages;

  void validate() const;
  int symbols_per_trial() const { return n_sym > 0 ? n_sym : cfg.n_coh; }
};

/// M=128, C=8, K=8, N=192, 100 trials.
RunSpec full_scale(RunSpec base);

struct SerRow {
  std::string algorithm;
  double snr_db = 0.0;
  double iot_db = 0.0;
  int M = 0;
  int C = 0;
  int K = 0;
  int N = 0;
  double T = 0.0;  // mean sweeps used
  double r = 0.0;  // mean LRD rank
  bool failed = false;
  double ser = 0.0;
  double mse = 0.0;
  double avg_entries_per_symbol = 0.0;
  double wallclock_s = 0.0;
  std::int64_t symbol_errors = 0;
  std::int64_t symbols = 0;
};

struct SerReport {
  std::vector<SerRow> rows;  // sorted by (algorithm, snr)

  void write_csv(std::ostream& os) const;
  std::string to_csv() const;
  const SerRow* find(const std::string& algorithm, double snr_db) const;
};

int worker_count(int requested);

SerReport run_sweep(const RunSpec& spec);

/// One algorithm through its protocol on one realization.
struct ProtocolRun {
  ProtocolResult result;
  BandwidthLedger ledger;
  std::vector<MessageRecord> log;
  int rank = 0;
};

ProtocolRun run_protocol(const AlgorithmSpec& a, const SystemConfig& cfg, const Realization& real,
                         const CMatrix& Y, AccessTrace* trace = nullptr);

/// Ledger per-symbol average for one algorithm on a synthetic realization
/// with the given dimensions. `fault` is added to the preprocessing count
/// before averaging (harness self-test hook).
Rational simulated_bandwidth(Algorithm a, const BandwidthParams& p, std::uint64_t seed = 1,
                             std::int64_t fault = 0);

class InsufficientErrors : public Error {
 public:
  using Error::Error;
};

struct PointComparison {
  double snr_db = 0.0;
  double ser_a = 0.0;
  double ser_b = 0.0;
  double diff = 0.0;  // ser_a - ser_b
  bool eligible = false;
};

struct OrderingVerdict {
  std::vector<PointComparison> points;
  int eligible = 0;
  int a_not_worse = 0;
  bool holds = false;
  std::string verdict;  // "equal", "a<=b" or "a>b"
};

/// Checks SER(a) <= SER(b) at >= min_fraction of the grid points where at
/// least min_errors symbol errors were observed (by either algorithm).
/// Throws InsufficientErrors when no point qualifies.
OrderingVerdict paired_ordering_test(const SerReport& report, const std::string& a,
                                     const std::string& b, std::int64_t min_errors = 100,
                                     double min_fraction = 0.8);

}  // namespace dbpeq
