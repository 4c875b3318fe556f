#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dbpeq/bench.hpp"

using namespace dbpeq;

namespace {

AlgorithmSpec alg(Algorithm a, int T = 4, std::string label = "") {
  AlgorithmSpec s;
  s.algorithm = a;
  s.T = T;
  s.label = std::move(label);
  return s;
}

std::vector<AlgorithmSpec> all_algorithms() {
  return {alg(Algorithm::kZf), alg(Algorithm::kLmmse), alg(Algorithm::kBdac), alg(Algorithm::kSdr),
          alg(Algorithm::kCdr), alg(Algorithm::kBcd), alg(Algorithm::kBcdLrd)};
}

RunSpec small_spec() {
  RunSpec s;
  s.cfg.M = 16;
  s.cfg.C = 4;
  s.cfg.N = 48;
  s.algorithms = all_algorithms();
  s.snr_grid = {0.0, 10.0};
  s.trials = 3;
  s.n_sym = 40;
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Sweep, SameSeedSameBytes) {
  RunSpec s = small_spec();
  s.workers = 2;
  EXPECT_EQ(run_sweep(s).to_csv(), run_sweep(s).to_csv());
}

TEST(Sweep, WorkerCountDoesNotChangeResults) {
  RunSpec s = small_spec();
  s.workers = 1;
  const std::string one = run_sweep(s).to_csv();
  s.workers = 8;
  EXPECT_EQ(run_sweep(s).to_csv(), one);
}

TEST(Sweep, SeedChangesResults) {
  RunSpec s = small_spec();
  const std::string a = run_sweep(s).to_csv();
  s.cfg.seed = 99;
  EXPECT_NE(run_sweep(s).to_csv(), a);
}

TEST(Sweep, NoiselessRunIsErrorFree) {
  RunSpec s;
  s.cfg.M = 16;
  s.cfg.K = 4;
  s.cfg.iot_db = 0.0;
  s.algorithms = all_algorithms();
  s.snr_grid = {60.0};
  s.trials = 1;
  s.n_sym = 250;
  const SerReport r = run_sweep(s);
  ASSERT_EQ(r.rows.size(), 7u);
  for (const auto& row : r.rows) {
    EXPECT_FALSE(row.failed) << row.algorithm;
    EXPECT_EQ(row.symbols, 1000);
    EXPECT_EQ(row.ser, 0.0) << row.algorithm;
  }
}

TEST(Sweep, RowsAndColumns) {
  RunSpec s = small_spec();
  s.algorithms = {alg(Algorithm::kSdr), alg(Algorithm::kBcd, 1, "bcd-1"), alg(Algorithm::kBcd, 3)};
  const SerReport r = run_sweep(s);
  ASSERT_EQ(r.rows.size(), 6u);
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const auto& a = r.rows[i - 1];
    const auto& b = r.rows[i];
    EXPECT_TRUE(a.algorithm < b.algorithm || (a.algorithm == b.algorithm && a.snr_db < b.snr_db));
  }
  for (const auto& row : r.rows) {
    EXPECT_GE(row.ser, 0.0);
    EXPECT_LE(row.ser, 1.0);
    EXPECT_EQ(row.symbols, 3 * 40 * 4);
    EXPECT_DOUBLE_EQ(row.ser, double(row.symbol_errors) / double(row.symbols));
  }
  EXPECT_EQ(r.find("bcd-1", 0.0)->T, 1.0);
  EXPECT_EQ(r.find("bcd", 10.0)->T, 3.0);
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "algorithm,snr_db,iot_db,M,C,K,N,T,r,ser,mse,avg_entries_per_symbol,wallclock_s");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Sweep, BandwidthColumnMatchesClosedForm) {
  RunSpec s = small_spec();
  s.snr_grid = {10.0};
  s.trials = 2;
  const SerReport r = run_sweep(s);
  const BandwidthParams p{s.cfg.M, s.cfg.K, s.cfg.C, s.cfg.N, 4, s.cfg.interferers(), s.cfg.n_coh};
  for (const auto& a : s.algorithms) {
    const SerRow* row = r.find(a.name(), 10.0);
    ASSERT_NE(row, nullptr);
    EXPECT_EQ(row->avg_entries_per_symbol, bandwidth_formula(a.algorithm, p).value()) << a.name();
  }
}

TEST(Sweep, RankDeficientConcatenationIsReportedNotFatal) {
  RunSpec s;
  s.cfg.N = 8;
  s.cfg.K = 4;
  s.cfg.C = 4;
  s.cfg.M = 32;
  s.algorithms = {alg(Algorithm::kCdr), alg(Algorithm::kSdr)};
  s.snr_grid = {10.0};
  s.trials = 2;
  s.n_sym = 10;
  const SerReport r = run_sweep(s);
  EXPECT_TRUE(r.find("cdr", 10.0)->failed);
  EXPECT_FALSE(r.find("sdr", 10.0)->failed);
  EXPECT_NE(r.to_csv().find("cdr,10,10,32,4,4,8,0,0,FAIL,FAIL,FAIL,0"), std::string::npos);
}

TEST(Sweep, WritesOutputAndMessageLogs) {
  const auto dir = std::filesystem::temp_directory_path() / "dbpeq_bench_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  RunSpec s = small_spec();
  s.algorithms = {alg(Algorithm::kBcd, 2), alg(Algorithm::kSdr)};
  s.out_path = (dir / "r.csv").string();
  s.dump_messages = (dir / "logs").string();
  const SerReport r = run_sweep(s);
  EXPECT_EQ(read_file(s.out_path), r.to_csv());
  const std::string bcd_log = read_file((dir / "logs" / "bcd.csv").string());
  EXPECT_EQ(bcd_log.rfind("phase,src,dst,payload_kind,rows,cols,real_entries\n", 0), 0u);
  EXPECT_NE(bcd_log.find("iteration2,"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "logs" / "sdr.csv"));
}

TEST(Sweep, Validation) {
  RunSpec s = small_spec();
  s.trials = 0;
  EXPECT_THROW(run_sweep(s), ConfigError);
  s = small_spec();
  s.snr_grid.clear();
  EXPECT_THROW(run_sweep(s), ConfigError);
  s = small_spec();
  s.algorithms.push_back(alg(Algorithm::kSdr));
  EXPECT_THROW(run_sweep(s), ConfigError);
}

TEST(Sweep, CentralizedNotWorseThanBlockDiagonal) {
  RunSpec s;
  s.algorithms = {alg(Algorithm::kLmmse), alg(Algorithm::kBdac)};
  s.snr_grid = {0.0, 5.0, 10.0, 15.0, 20.0};
  s.trials = 10;
  const SerReport r = run_sweep(s);
  double lmmse = 0.0, bdac = 0.0;
  int lmmse_increases = 0;
  double prev = 2.0;
  for (double snr : s.snr_grid) {
    lmmse += r.find("lmmse", snr)->ser;
    bdac += r.find("bdac", snr)->ser;
    const SerRow* row = r.find("lmmse", snr);
    if (row->ser > prev && row->symbol_errors >= 100) ++lmmse_increases;
    prev = row->ser;
  }
  EXPECT_LE(lmmse, bdac);
  EXPECT_LE(lmmse_increases, 1);
}

TEST(PairedOrdering, IdenticalAlgorithmsAreEqual) {
  RunSpec s = small_spec();
  s.algorithms = {alg(Algorithm::kLmmse), alg(Algorithm::kLmmse, 4, "lmmse-copy")};
  const SerReport r = run_sweep(s);
  const OrderingVerdict v = paired_ordering_test(r, "lmmse", "lmmse-copy");
  EXPECT_EQ(v.verdict, "equal");
  EXPECT_TRUE(v.holds);
}

TEST(PairedOrdering, TooFewErrorsIsFlagged) {
  RunSpec s = small_spec();
  s.snr_grid = {0.0};
  s.algorithms = {alg(Algorithm::kLmmse), alg(Algorithm::kZf)};
  s.trials = 1;
  s.n_sym = 10;
  const SerReport r = run_sweep(s);
  const SerRow* a = r.find("lmmse", 0.0);
  const SerRow* b = r.find("zf", 0.0);
  ASSERT_LT(std::max(a->symbol_errors, b->symbol_errors), 100);
  ASSERT_NE(a->symbol_errors, b->symbol_errors);
  EXPECT_THROW(paired_ordering_test(r, "lmmse", "zf"), InsufficientErrors);
}

TEST(PairedOrdering, LmmseBeatsZfAtLowSnrWithColoredNoise) {
  RunSpec s;
  s.algorithms = {alg(Algorithm::kLmmse), alg(Algorithm::kZf)};
  s.snr_grid = {0.0, 5.0, 10.0};
  s.trials = 5;
  const SerReport r = run_sweep(s);
  const OrderingVerdict v = paired_ordering_test(r, "lmmse", "zf");
  EXPECT_EQ(v.verdict, "a<=b");
  EXPECT_EQ(v.eligible, 3);
  for (const auto& p : v.points) EXPECT_LT(p.ser_a, p.ser_b);
}

TEST(PairedOrdering, SyntheticVerdicts) {
  SerReport r;
  auto add = [&](const std::string& a, double snr, std::int64_t errors) {
    SerRow row;
    row.algorithm = a;
    row.snr_db = snr;
    row.symbol_errors = errors;
    row.symbols = 10000;
    row.ser = errors / 10000.0;
    r.rows.push_back(row);
  };
  // a is better at 4 of 5 eligible points; the last point has too few errors.
  const std::int64_t a_err[] = {500, 400, 300, 250, 120, 10};
  const std::int64_t b_err[] = {600, 450, 350, 240, 130, 20};
  for (int i = 0; i < 6; ++i) {
    add("a", i, a_err[i]);
    add("b", i, b_err[i]);
  }
  OrderingVerdict v = paired_ordering_test(r, "a", "b");
  EXPECT_EQ(v.eligible, 5);
  EXPECT_EQ(v.a_not_worse, 4);
  EXPECT_EQ(v.verdict, "a<=b");
  v = paired_ordering_test(r, "b", "a");
  EXPECT_EQ(v.verdict, "a>b");
  EXPECT_THROW(paired_ordering_test(r, "a", "missing"), Error);
}

TEST(Workers, EnvironmentCap) {
  ::setenv("DBP_EQ_THREADS", "2", 1);
  EXPECT_EQ(worker_count(8), 2);
  EXPECT_EQ(worker_count(1), 1);
  ::unsetenv("DBP_EQ_THREADS");
  EXPECT_EQ(worker_count(8), 8);
  EXPECT_GE(worker_count(0), 1);
}

TEST(Bandwidth, SimulatedMatchesFormula) {
  const BandwidthParams p{128, 8, 8, 192, 2, 8, 480};
  for (Algorithm a : {Algorithm::kLmmse, Algorithm::kSdr, Algorithm::kBcd, Algorithm::kBcdLrd}) {
    EXPECT_EQ(simulated_bandwidth(a, p), bandwidth_formula(a, p)) << to_string(a);
  }
  EXPECT_NE(simulated_bandwidth(Algorithm::kSdr, p, 1, 1), bandwidth_formula(Algorithm::kSdr, p));
}
