// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "dbpeq/bench.hpp"
#include "dbpeq/dbpnet.hpp"
#include "dbpeq/equalizers.hpp"

using namespace dbpeq;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Blocks {
  std::vector<CMatrix> H;
  std::vector<CMatrix> noise;
  std::vector<CMatrix> R;
  std::vector<CMatrix> Z;
};

Blocks blocks_of(const Realization& real) {
  Blocks b;
  b.H = split_rows(real.H, real.partition);
  b.noise = split_rows(real.noise, real.partition);
  for (const auto& n : b.noise) {
    b.R.push_back(sample_covariance(n));
    b.Z.push_back(scaled_samples(n));
  }
  return b;
}

double rel_diff(const CMatrix& a, const CMatrix& b) { return (a - b).norm() / b.norm(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome bcd_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  SystemConfig cfg;
  double worst = 0.0;
  int max_sweeps = 0;
  for (int t = 0; t < 20; ++t) {
    const Realization real = gen_realization(cfg, t);
    const Blocks b = blocks_of(real);
    BcdOptions opts;
    opts.tol = 1e-12;
    const EqualizerResult bcd = bcd_mmse(b.H, b.R, b.Z, cfg.Es, opts);
    worst = std::max(worst, rel_diff(bcd.W, lmmse_matrix(real.H, sample_covariance(real.noise), cfg.Es)));
    max_sweeps = std::max(max_sweeps, bcd.iterations);
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-8 && secs < 10.0,
          fmt::format("20 realizations, max rel. gap {:.3e} (< 1e-8), max sweeps {}, {:.2f} s (< 10 s)",
                      worst, max_sweeps, secs)};
}

Outcome bcd_descent() {
  SystemConfig cfg;
  int violations = 0;
  int updates = 0;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Realization real = gen_realization(cfg, 1000 + t);
    const Blocks b = blocks_of(real);
    double prev = objective_sample(bcd_start(b.H, b.R, b.Z, cfg.Es, BcdInit::kBdac).W, b.H, b.noise, cfg.Es);
    BcdOptions opts;
    opts.sweeps = 4;
    opts.on_update = [&](int, int, std::span<const CMatrix> W) {
      const double f = objective_sample(W, b.H, b.noise, cfg.Es);
      ++updates;
      if (f > prev + 1e-12) {
        ++violations;
        worst = std::max(worst, f - prev);
      }
      prev = f;
    };
    bcd_mmse(b.H, b.R, b.Z, cfg.Es, opts);
  }
  return {violations == 0 && updates == 50 * cfg.C * 4,
          fmt::format("{} block updates over 50 realizations, {} increases (largest {:.3e})", updates,
                      violations, worst)};
}

Outcome gradient() {
  SystemConfig cfg;
  std::mt19937_64 rng(substream_seed(cfg.seed, 3, 77));
  const double h = 1e-5;
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Realization real = gen_realization(cfg, 2000 + t);
    const Blocks b = blocks_of(real);
    std::vector<CMatrix> W;
    for (const auto& hc : b.H) W.push_back(complex_gaussian(cfg.K, hc.rows(), rng));
    for (int c = 0; c < cfg.C; ++c) {
      const CMatrix g = objective_gradient(c, W, b.H, b.noise, cfg.Es);
      CMatrix fd(g.rows(), g.cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
          auto partial = [&](cdouble dir) {
            std::vector<CMatrix> wp = W, wm = W;
            wp[c](i, j) += h * dir;
            wm[c](i, j) -= h * dir;
            return (objective_sample(wp, b.H, b.noise, cfg.Es) -
                    objective_sample(wm, b.H, b.noise, cfg.Es)) / (2 * h);
          };
          fd(i, j) = cdouble(partial({1.0, 0.0}), partial({0.0, 1.0}));
        }
      }
      worst = std::max(worst, rel_diff(fd, g));
    }
  }
  return {worst < 1e-4, fmt::format("10 points x {} blocks, max rel. error {:.3e} (< 1e-4)", cfg.C, worst)};
}

Outcome mse_dominance() {
  int psd_fail = 0;
  int trace_fail = 0;
  double worst = 0.0;
  for (int C : {2, 4}) {
    SystemConfig cfg;
    cfg.M = 16;
    cfg.C = C;
    for (int t = 0; t < 50; ++t) {
      const Realization real = gen_realization(cfg, 3000 + t);
      const Blocks b = blocks_of(real);
      std::vector<CMatrix> Q;
      for (std::size_t c = 0; c < b.H.size(); ++c) Q.push_back(local_compression(b.H[c], b.R[c]).Q);
      const CMatrix R = sample_covariance(real.noise);
      const CMatrix Es = mse_matrix(real.H, R, superimposed_compression(Q), cfg.Es);
      const CMatrix Ec = mse_matrix(real.H, R, concatenated_compression(Q), cfg.Es);
      const double tr = std::abs(Es.trace().real());
      const double lo = min_eigenvalue(hermitize(Es - Ec));
      worst = std::min(worst, lo / tr);
      if (lo < -1e-9 * tr) ++psd_fail;
      if (Es.trace().real() < Ec.trace().real()) ++trace_fail;
    }
  }
  return {psd_fail == 0 && trace_fail == 0,
          fmt::format("100 instances, C in {{2,4}}: {} PSD violations, {} trace violations, min eig/trace {:.3e}",
                      psd_fail, trace_fail, worst)};
}

Outcome estimate_identity() {
  SystemConfig cfg;
  cfg.M = 16;
  std::mt19937_64 rng(substream_seed(cfg.seed, 5, 77));
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Realization real = gen_realization(cfg, 4000 + t);
    const SymbolBlock sym = gen_symbols(cfg, real, t, 64);
    const CMatrix R = sample_covariance(real.noise);
    const CMatrix ref = lmmse_matrix(real.H, R, cfg.Es) * sym.Y;
    const CMatrix P = complex_gaussian(cfg.K, cfg.K, rng);
    const CMatrix Q = P * HpdFactor(R).solve(real.H).adjoint();
    const CMatrix est = lmmse_matrix(Q * real.H, hermitize(Q * R * Q.adjoint()), cfg.Es) * (Q * sym.Y);
    worst = std::max(worst, rel_diff(est, ref));
  }
  return {worst < 1e-9, fmt::format("20 random P, max rel. estimate gap {:.3e} (< 1e-9)", worst)};
}

Outcome lrd() {
  SystemConfig cfg;
  cfg.M = 16;
  cfg.N = 48;
  cfg.n_interf = 4;
  double exact = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Realization real = gen_realization(cfg, 5000 + t, NoisePowers{0.0, 1.0});
    const CMatrix G = vstack(lrd_sequential(split_rows(real.noise, real.partition), RankRule{4, 0.0}));
    exact = std::max(exact, rel_diff(G * G.adjoint(), sample_covariance(real.noise)));
  }
  double ratio = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Realization real = gen_realization(cfg, 6000 + t);
    const CMatrix G = vstack(lrd_sequential(split_rows(real.noise, real.partition), RankRule{4, 0.0}));
    const CMatrix R = sample_covariance(real.noise);
    const CMatrix Gb = reconstruct(truncated_svd(scaled_samples(real.noise), 4));
    ratio = std::max(ratio, (R - G * G.adjoint()).norm() / (R - Gb * Gb.adjoint()).norm());
  }
  return {exact < 1e-9 && ratio <= 1.1,
          fmt::format("N0=0: max rel. gap {:.3e} (< 1e-9); IoT 10 dB: max sequential/global residual "
                      "{:.4f} over 50 instances (<= 1.1)",
                      exact, ratio)};
}

Outcome bandwidth() {
  const std::vector<BandwidthParams> grid = {
      {128, 8, 8, 192, 2, 8, 480}, {256, 8, 16, 192, 4, 8, 480}, {32, 4, 4, 64, 1, 4, 480},
      {32, 4, 4, 64, 4, 2, 480},   {32, 4, 2, 16, 3, 2, 100},    {64, 8, 8, 192, 2, 8, 120},
  };
  int mismatches = 0;
  int compared = 0;
  for (const auto& p : grid) {
    for (Algorithm a : {Algorithm::kZf, Algorithm::kLmmse, Algorithm::kBdac, Algorithm::kSdr,
                        Algorithm::kCdr, Algorithm::kBcd, Algorithm::kBcdLrd}) {
      ++compared;
      if (!(simulated_bandwidth(a, p) == bandwidth_formula(a, p))) ++mismatches;
    }
  }
  const BandwidthParams ref = grid.front();
  const double lmmse = simulated_bandwidth(Algorithm::kLmmse, ref).value();
  const double sdr = simulated_bandwidth(Algorithm::kSdr, ref).value();
  const double cdr = simulated_bandwidth(Algorithm::kCdr, ref).value();
  const double bcd = simulated_bandwidth(Algorithm::kBcd, ref).value();
  const bool anchors = std::abs(lmmse - 362.6667) < 1e-3 && std::abs(sdr - 181.3333) < 1e-3 &&
                       std::abs(cdr - 181.3333) < 1e-3;
  return {mismatches == 0 && anchors,
          fmt::format("{} of {} exact comparisons differ; C=8 K=8 N=192 n_coh=480: lmmse {:.2f}, "
                      "sdr {:.2f}, cdr {:.2f}, bcd(T=2) {:.2f}",
                      mismatches, compared, lmmse, sdr, cdr, bcd)};
}

AlgorithmSpec spec_of(Algorithm a, std::string label = "", int T = 4, double tol = 0.0) {
  AlgorithmSpec s;
  s.algorithm = a;
  s.label = std::move(label);
  s.T = T;
  s.tol = tol;
  return s;
}

Outcome ser_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  RunSpec s;
  s.snr_grid = {0.0, 5.0, 10.0, 15.0, 20.0};
  s.trials = 50;
  s.n_sym = 480;
  s.algorithms = {spec_of(Algorithm::kLmmse),
                  spec_of(Algorithm::kBcd, "bcd-converged", 4, 1e-12),
                  spec_of(Algorithm::kBcd, "bcd-1sweep", 1),
                  spec_of(Algorithm::kCdr),
                  spec_of(Algorithm::kSdr),
                  spec_of(Algorithm::kBdac),
                  spec_of(Algorithm::kZf),
                  spec_of(Algorithm::kBcdLrd)};
  const SerReport r = run_sweep(s);
  const double secs = seconds_since(t0);

  std::string detail;
  bool pass = true;
  const std::vector<std::pair<std::string, std::string>> chain = {
      {"lmmse", "bcd-converged"}, {"bcd-converged", "bcd-1sweep"}, {"bcd-1sweep", "cdr"},
      {"cdr", "sdr"},             {"sdr", "bdac"}};
  for (const auto& [a, b] : chain) {
    std::string line;
    try {
      const OrderingVerdict v = paired_ordering_test(r, a, b);
      pass = pass && v.holds;
      line = fmt::format("{} <= {}: {} ({}/{} eligible points)", a, b, v.holds ? "holds" : "violated",
                         v.a_not_worse, v.eligible);
    } catch (const InsufficientErrors&) {
      pass = false;
      line = fmt::format("{} <= {}: no point with >= 100 errors", a, b);
    }
    detail += "\n    " + line;
  }
  int zf_worse = 0;
  for (double snr : {0.0, 5.0, 10.0}) {
    if (r.find("zf", snr)->ser > r.find("lmmse", snr)->ser) ++zf_worse;
  }
  pass = pass && zf_worse == 3;
  detail += fmt::format("\n    zf worse than lmmse at {}/3 points with SNR <= 10 dB", zf_worse);
  detail += "\n    SER by SNR (0, 5, 10, 15, 20 dB):";
  for (const auto& a : s.algorithms) {
    std::string row = fmt::format("\n      {:<14}", a.name());
    for (double snr : s.snr_grid) row += fmt::format(" {:.5f}", r.find(a.name(), snr)->ser);
    detail += row;
  }
  pass = pass && secs < 300.0;
  return {pass, fmt::format("desk grid, 50 trials x 480 symbols, {:.1f} s (< 300 s){}", secs, detail)};
}

Outcome degenerate() {
  SystemConfig cfg;
  cfg.C = 1;
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Realization real = gen_realization(cfg, 7000 + t);
    const SymbolBlock sym = gen_symbols(cfg, real, t, 64);
    const CMatrix ref = lmmse_matrix(real.H, sample_covariance(real.noise), cfg.Es) * sym.Y;
    for (Algorithm a : {Algorithm::kSdr, Algorithm::kCdr, Algorithm::kBdac, Algorithm::kBcd}) {
      worst = std::max(worst, rel_diff(run_protocol(spec_of(a, "", 1), cfg, real, sym.Y).result.s_hat, ref));
    }
  }
  SystemConfig white;
  white.iot_db = 0.0;
  white.N = 4096;
  double gap = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Realization real = gen_realization(white, 8000 + t);
    const Blocks b = blocks_of(real);
    gap = std::max(gap, rel_diff(bdac_mmse(b.H, b.R, white.Es).W,
                                 lmmse_matrix(real.H, sample_covariance(real.noise), white.Es)));
  }
  return {worst < 1e-10 && gap < 0.05,
          fmt::format("C=1: max rel. gap of sdr/cdr/bdac/bcd(1) to lmmse {:.3e} (< 1e-10); IoT 0 dB, "
                      "N=4096: max bdac rel. gap {:.4f} (< 0.05)",
                      worst, gap)};
}

Outcome determinism() {
  RunSpec s;
  s.snr_grid = {0.0, 10.0, 20.0};
  s.trials = 8;
  s.n_sym = 120;
  s.algorithms = {spec_of(Algorithm::kZf),  spec_of(Algorithm::kLmmse), spec_of(Algorithm::kBdac),
                  spec_of(Algorithm::kSdr), spec_of(Algorithm::kCdr),   spec_of(Algorithm::kBcd),
                  spec_of(Algorithm::kBcdLrd)};
  s.workers = 8;
  const std::string a = run_sweep(s).to_csv();
  const std::string b = run_sweep(s).to_csv();
  s.workers = 1;
  const std::string one = run_sweep(s).to_csv();
  return {a == b && a == one, fmt::format("two runs {}, workers 1 vs 8 {} ({} bytes)",
                                          a == b ? "identical" : "differ", a == one ? "identical" : "differ",
                                          a.size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"bcd-convergence", bcd_convergence}, {"bcd-descent", bcd_descent},
      {"gradient", gradient},               {"mse-dominance", mse_dominance},
      {"estimate-identity", estimate_identity}, {"lrd", lrd},
      {"bandwidth", bandwidth},             {"ser-ordering", ser_ordering},
      {"degenerate", degenerate},           {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    fmt::print("{} {:>2} {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{}/{} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
