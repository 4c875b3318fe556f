#include "dbpeq/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace dbpeq {

void RunSpec::validate() const {
  cfg.validate();
  if (trials < 1) throw ConfigError("trials: must be >= 1");
  if (snr_grid.empty()) throw ConfigError("snr: grid is empty");
  if (algorithms.empty()) throw ConfigError("algorithms: list is empty");
  if (n_sym < 0) throw ConfigError("n_sym: must be >= 0");
  std::set<std::string> names;
  for (const auto& a : algorithms) {
    if (!names.insert(a.name()).second) throw ConfigError("algorithms: duplicate entry '" + a.name() + "'");
    if (a.T < 0) throw ConfigError("T: must be >= 0");
    if (a.tol < 0.0) throw ConfigError("tol: must be >= 0");
  }
}

RunSpec full_scale(RunSpec base) {
  base.cfg.M = 128;
  base.cfg.C = 8;
  base.cfg.K = 8;
  base.cfg.N = 192;
  base.trials = 100;
  return base;
}

void SerReport::write_csv(std::ostream& os) const {
  os << "algorithm,snr_db,iot_db,M,C,K,N,T,r,ser,mse,avg_entries_per_symbol,wallclock_s\n";
  for (const auto& r : rows) {
    fmt::print(os, "{},{},{},{},{},{},{},{},{},", r.algorithm, r.snr_db, r.iot_db, r.M, r.C, r.K,
               r.N, r.T, r.r);
    if (r.failed) {
      os << "FAIL,FAIL,FAIL,";
    } else {
      fmt::print(os, "{},{},{},", r.ser, r.mse, r.avg_entries_per_symbol);
    }
    fmt::print(os, "{}\n", r.wallclock_s);
  }
}

std::string SerReport::to_csv() const {
  std::ostringstream os;
  write_csv(os);
  return os.str();
}

const SerRow* SerReport::find(const std::string& algorithm, double snr_db) const {
  for (const auto& r : rows) {
    if (r.algorithm == algorithm && r.snr_db == snr_db) return &r;
  }
  return nullptr;
}

int worker_count(int requested) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("DBP_EQ_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

ProtocolRun run_protocol(const AlgorithmSpec& a, const SystemConfig& cfg, const Realization& real,
                         const CMatrix& Y, AccessTrace* trace) {
  std::vector<DuNode> dus = make_dus(real, Y, trace);
  Fabric f(Topology{topology_for(a.algorithm), real.partition.count()});
  ProtocolRun run;
  switch (a.algorithm) {
    case Algorithm::kZf: run.result = run_centralized_star(f, dus, cfg.Es, true); break;
    case Algorithm::kLmmse: run.result = run_centralized_star(f, dus, cfg.Es, false); break;
    case Algorithm::kBdac: run.result = run_bdac(f, dus, cfg.Es); break;
    case Algorithm::kSdr: run.result = run_sdr_star(f, dus, cfg.Es); break;
    case Algorithm::kCdr: run.result = run_cdr_star(f, dus, cfg.Es); break;
    case Algorithm::kBcd:
    case Algorithm::kBcdLrd: {
      BcdProtocolOptions opts;
      opts.sweeps = a.T;
      opts.tol = a.tol;
      opts.max_sweeps = a.max_sweeps;
      opts.use_lrd = a.algorithm == Algorithm::kBcdLrd;
      opts.rank = RankRule{a.r > 0 ? a.r : (a.r == 0 ? cfg.interferers() : 0), a.tau};
      run.result = run_bcd_daisy(f, dus, cfg.Es, opts);
      break;
    }
  }
  if (!run.result.G.empty()) run.rank = static_cast<int>(run.result.G.front().cols());
  run.ledger = f.ledger();
  run.log = f.log();
  return run;
}

Rational simulated_bandwidth(Algorithm a, const BandwidthParams& p, std::uint64_t seed,
                             std::int64_t fault) {
  SystemConfig cfg;
  cfg.M = p.M;
  cfg.K = p.K;
  cfg.C = p.C;
  cfg.N = p.N;
  cfg.n_coh = p.n_coh;
  cfg.seed = seed;
  const Realization real = gen_realization(cfg, 0);
  const SymbolBlock block = gen_symbols(cfg, real, 0, 2);
  AlgorithmSpec spec;
  spec.algorithm = a;
  spec.T = p.T;
  spec.r = p.r;
  BandwidthLedger ledger = run_protocol(spec, cfg, real, block.Y).ledger;
  ledger.inject_fault(fault);
  return ledger.average_per_symbol(cfg.n_coh);
}

namespace {

struct Cell {
  bool failed = false;
  std::int64_t errors = 0;
  double sq_err = 0.0;
  Rational entries;
  int sweeps = 0;
  int rank = 0;
  double seconds = 0.0;
};

void dump_log(const std::string& dir, const std::string& name, const std::vector<MessageRecord>& log) {
  std::filesystem::create_directories(dir);
  std::ofstream os(std::filesystem::path(dir) / (name + ".csv"));
  os << "phase,src,dst,payload_kind,rows,cols,real_entries\n";
  for (const auto& r : log) os << r.to_csv_line() << '\n';
}

void run_cell_group(const RunSpec& spec, std::size_t snr_idx, int trial, Cell* cells) {
  SystemConfig cfg = spec.cfg;
  cfg.snr_db = spec.snr_grid[snr_idx];
  const int n_sym = spec.symbols_per_trial();
  const Realization real = gen_realization(cfg, static_cast<std::uint64_t>(trial));
  const SymbolBlock block = gen_symbols(cfg, real, static_cast<std::uint64_t>(trial), n_sym);

  for (std::size_t a = 0; a < spec.algorithms.size(); ++a) {
    const AlgorithmSpec& alg = spec.algorithms[a];
    Cell& cell = cells[a];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const ProtocolRun run = run_protocol(alg, cfg, real, block.Y);
      const CMatrix& s_hat = run.result.s_hat;
      for (int j = 0; j < n_sym; ++j) {
        for (int k = 0; k < cfg.K; ++k) {
          const int sent = block.indices[static_cast<std::size_t>(j) * cfg.K + k];
          if (slice_index(s_hat(k, j), cfg.modulation, cfg.Es) != sent) ++cell.errors;
          cell.sq_err += std::norm(s_hat(k, j) - block.S(k, j));
        }
      }
      cell.entries = run.ledger.average_per_symbol(cfg.n_coh);
      cell.sweeps = run.result.sweeps;
      cell.rank = run.rank;
      if (!spec.dump_messages.empty() && snr_idx == 0 && trial == 0) {
        dump_log(spec.dump_messages, alg.name(), run.log);
      }
    } catch (const Error&) {
      cell.failed = true;
    }
    if (spec.timing) {
      cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  }
}

}  // namespace

SerReport run_sweep(const RunSpec& spec) {
  spec.validate();
  const std::size_t n_alg = spec.algorithms.size();
  const std::size_t n_snr = spec.snr_grid.size();
  const std::size_t n_trials = static_cast<std::size_t>(spec.trials);
  const std::size_t n_tasks = n_snr * n_trials;
  std::vector<Cell> cells(n_tasks * n_alg);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) {
      run_cell_group(spec, t / n_trials, static_cast<int>(t % n_trials), &cells[t * n_alg]);
    }
  };
  const int n_workers = std::min<int>(worker_count(spec.workers), static_cast<int>(n_tasks));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Reduction runs in fixed (snr, trial) order, independent of scheduling.
  SerReport report;
  const std::int64_t symbols_per_trial =
      static_cast<std::int64_t>(spec.symbols_per_trial()) * spec.cfg.K;
  for (std::size_t a = 0; a < n_alg; ++a) {
    for (std::size_t s = 0; s < n_snr; ++s) {
      SerRow row;
      row.algorithm = spec.algorithms[a].name();
      row.snr_db = spec.snr_grid[s];
      row.iot_db = spec.cfg.iot_db;
      row.M = spec.cfg.M;
      row.C = spec.cfg.C;
      row.K = spec.cfg.K;
      row.N = spec.cfg.N;
      Rational entries;
      double sq_err = 0.0;
      std::int64_t sweeps = 0;
      std::int64_t rank = 0;
      for (std::size_t t = 0; t < n_trials; ++t) {
        const Cell& c = cells[(s * n_trials + t) * n_alg + a];
        row.failed = row.failed || c.failed;
        row.symbol_errors += c.errors;
        sq_err += c.sq_err;
        entries = entries + c.entries;
        sweeps += c.sweeps;
        rank += c.rank;
        row.wallclock_s += c.seconds;
      }
      row.symbols = symbols_per_trial * spec.trials;
      row.T = static_cast<double>(sweeps) / spec.trials;
      row.r = static_cast<double>(rank) / spec.trials;
      if (!row.failed) {
        row.ser = static_cast<double>(row.symbol_errors) / static_cast<double>(row.symbols);
        row.mse = sq_err / static_cast<double>(row.symbols);
        row.avg_entries_per_symbol = Rational(entries.num, entries.den * spec.trials).value();
      }
      report.rows.push_back(std::move(row));
    }
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const SerRow& x, const SerRow& y) {
    if (x.algorithm != y.algorithm) return x.algorithm < y.algorithm;
    return x.snr_db < y.snr_db;
  });

  if (!spec.out_path.empty()) {
    std::ofstream os(spec.out_path, std::ios::binary);
    if (!os) throw Error("cannot open output file '" + spec.out_path + "'");
    report.write_csv(os);
  }
  return report;
}

OrderingVerdict paired_ordering_test(const SerReport& report, const std::string& a,
                                     const std::string& b, std::int64_t min_errors,
                                     double min_fraction) {
  OrderingVerdict v;
  bool identical = true;
  for (const auto& row : report.rows) {
    if (row.algorithm != a) continue;
    const SerRow* other = report.find(b, row.snr_db);
    if (!other) throw Error("paired_ordering_test: '" + b + "' missing at a grid point");
    if (row.failed || other->failed) {
      throw Error("paired_ordering_test: failed rows cannot be compared");
    }
    PointComparison p;
    p.snr_db = row.snr_db;
    p.ser_a = row.ser;
    p.ser_b = other->ser;
    p.diff = row.ser - other->ser;
    p.eligible = std::max(row.symbol_errors, other->symbol_errors) >= min_errors;
    identical = identical && row.symbol_errors == other->symbol_errors && row.ser == other->ser;
    if (p.eligible) {
      ++v.eligible;
      if (p.ser_a <= p.ser_b) ++v.a_not_worse;
    }
    v.points.push_back(p);
  }
  if (v.points.empty()) throw Error("paired_ordering_test: '" + a + "' not in report");
  if (identical) {
    v.holds = true;
    v.verdict = "equal";
    return v;
  }
  if (v.eligible == 0) {
    throw InsufficientErrors("paired_ordering_test: no grid point has " +
                             std::to_string(min_errors) + " symbol errors");
  }
  v.holds = v.a_not_worse >= min_fraction * v.eligible;
  v.verdict = v.holds ? "a<=b" : "a>b";
  return v;
}

}  // namespace dbpeq
