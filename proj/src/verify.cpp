#include "dbpeq/verify.hpp"

#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "dbpeq/bench.hpp"
#include "dbpeq/dbpnet.hpp"
#include "dbpeq/equalizers.hpp"

namespace dbpeq {

namespace {

struct Blocks {
  std::vector<CMatrix> H;
  std::vector<CMatrix> noise;
  std::vector<CMatrix> R;  // local sample covariances
  std::vector<CMatrix> Z;  // scaled samples
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

CheckResult check_bcd_convergence() {
  SystemConfig cfg;  // M=32, C=4, K=4, N=64, 10 dB / 10 dB
  double worst = 0.0;
  int max_sweeps = 0;
  for (int t = 0; t < 5; ++t) {
    const Realization real = gen_realization(cfg, t);
    const Blocks b = blocks_of(real);
    BcdOptions opts;
    opts.tol = 1e-12;
    const EqualizerResult bcd = bcd_mmse(b.H, b.R, b.Z, cfg.Es, opts);
    const CMatrix ref = lmmse_matrix(real.H, sample_covariance(real.noise), cfg.Es);
    worst = std::max(worst, rel_diff(bcd.W, ref));
    max_sweeps = std::max(max_sweeps, bcd.iterations);
  }
  return {"bcd-convergence", worst < 1e-8,
          fmt::format("max rel. gap to LMMSE {:.3e}, max sweeps {}", worst, max_sweeps)};
}

CheckResult check_bcd_descent() {
  SystemConfig cfg;
  int violations = 0;
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Realization real = gen_realization(cfg, 100 + t);
    const Blocks b = blocks_of(real);
    const BcdStart st = bcd_start(b.H, b.R, b.Z, cfg.Es, BcdInit::kBdac);
    double prev = objective_sample(st.W, b.H, b.noise, cfg.Es);
    BcdOptions opts;
    opts.sweeps = 4;
    opts.on_update = [&](int, int, std::span<const CMatrix> W) {
      const double f = objective_sample(W, b.H, b.noise, cfg.Es);
      if (f > prev + 1e-12) {
        ++violations;
        worst = std::max(worst, f - prev);
      }
      prev = f;
    };
    bcd_mmse(b.H, b.R, b.Z, cfg.Es, opts);
  }
  return {"bcd-descent", violations == 0,
          fmt::format("{} increases over 80 block updates (largest {:.3e})", violations, worst)};
}

CheckResult check_gradient() {
  SystemConfig cfg;
  cfg.M = 16;
  cfg.N = 32;
  std::mt19937_64 rng(substream_seed(cfg.seed, 7, 99));
  double worst = 0.0;
  const double h = 1e-6;
  for (int t = 0; t < 3; ++t) {
    const Realization real = gen_realization(cfg, t);
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
  return {"gradient", worst < 1e-4, fmt::format("max blockwise rel. error {:.3e}", worst)};
}

CheckResult check_mse_dominance() {
  int failures = 0;
  double worst = 0.0;
  for (int C : {2, 4}) {
    SystemConfig cfg;
    cfg.M = 16;
    cfg.C = C;
    for (int t = 0; t < 10; ++t) {
      const Realization real = gen_realization(cfg, t);
      const Blocks b = blocks_of(real);
      std::vector<CMatrix> Q;
      for (std::size_t c = 0; c < b.H.size(); ++c) Q.push_back(local_compression(b.H[c], b.R[c]).Q);
      const CMatrix R = sample_covariance(real.noise);
      const CMatrix Es = mse_matrix(real.H, R, superimposed_compression(Q), cfg.Es);
      const CMatrix Ec = mse_matrix(real.H, R, concatenated_compression(Q), cfg.Es);
      const CMatrix d = hermitize(Es - Ec);
      const double tr = std::abs(Es.trace().real());
      const double lo = min_eigenvalue(d);
      worst = std::min(worst, lo / tr);
      if (lo < -1e-9 * tr || Es.trace().real() < Ec.trace().real()) ++failures;
    }
  }
  return {"mse-dominance", failures == 0,
          fmt::format("{} violations in 20 instances, min eig/trace {:.3e}", failures, worst)};
}

CheckResult check_estimate_identity() {
  SystemConfig cfg;
  cfg.M = 16;
  std::mt19937_64 rng(substream_seed(cfg.seed, 11, 99));
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Realization real = gen_realization(cfg, t);
    const SymbolBlock sym = gen_symbols(cfg, real, t, 16);
    const CMatrix R = sample_covariance(real.noise);
    const CMatrix ref = lmmse_matrix(real.H, R, cfg.Es) * sym.Y;
    const CMatrix P = complex_gaussian(cfg.K, cfg.K, rng);
    const CMatrix Q = P * HpdFactor(R).solve(real.H).adjoint();
    const CMatrix QR = hermitize(Q * R * Q.adjoint());
    const CMatrix est = lmmse_matrix(Q * real.H, QR, cfg.Es) * (Q * sym.Y);
    worst = std::max(worst, rel_diff(est, ref));
  }
  return {"estimate-identity", worst < 1e-9, fmt::format("max rel. estimate gap {:.3e}", worst)};
}

CheckResult check_lrd_exact() {
  SystemConfig cfg;
  cfg.M = 16;
  cfg.N = 48;
  cfg.n_interf = 4;
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Realization real = gen_realization(cfg, t, NoisePowers{0.0, 1.0});
    const Blocks b = blocks_of(real);
    const CMatrix G = vstack(lrd_sequential(b.noise, RankRule{4, 0.0}));
    const CMatrix R = sample_covariance(real.noise);
    worst = std::max(worst, rel_diff(G * G.adjoint(), R));
  }
  return {"lrd-exact", worst < 1e-9, fmt::format("max rel. covariance gap {:.3e}", worst)};
}

CheckResult check_ledger(std::int64_t fault) {
  const std::vector<BandwidthParams> grid = {
      {32, 4, 4, 64, 1, 4, 480},
      {32, 4, 2, 16, 3, 2, 100},
      {64, 8, 8, 192, 2, 8, 480},
  };
  int mismatches = 0;
  int compared = 0;
  for (const auto& p : grid) {
    for (Algorithm a : {Algorithm::kZf, Algorithm::kLmmse, Algorithm::kBdac, Algorithm::kSdr,
                        Algorithm::kCdr, Algorithm::kBcd, Algorithm::kBcdLrd}) {
      ++compared;
      if (!(simulated_bandwidth(a, p, 1, fault) == bandwidth_formula(a, p))) ++mismatches;
    }
  }
  return {"ledger", mismatches == 0,
          fmt::format("{} of {} ledger averages differ from the closed forms", mismatches, compared)};
}

CheckResult check_degenerate() {
  SystemConfig cfg;
  cfg.M = 16;
  cfg.C = 1;
  double worst = 0.0;
  for (int t = 0; t < 3; ++t) {
    const Realization real = gen_realization(cfg, t);
    const SymbolBlock sym = gen_symbols(cfg, real, t, 32);
    const CMatrix ref = lmmse_matrix(real.H, sample_covariance(real.noise), cfg.Es) * sym.Y;
    for (Algorithm a : {Algorithm::kSdr, Algorithm::kCdr, Algorithm::kBdac, Algorithm::kBcd}) {
      AlgorithmSpec spec;
      spec.algorithm = a;
      spec.T = 1;
      worst = std::max(worst, rel_diff(run_protocol(spec, cfg, real, sym.Y).result.s_hat, ref));
    }
  }
  return {"degenerate", worst < 1e-10,
          fmt::format("C=1: max rel. gap of sdr/cdr/bdac/bcd(1) to LMMSE {:.3e}", worst)};
}

struct NamedCheck {
  const char* name;
  std::function<CheckResult(const VerifyOptions&)> run;
};

const std::vector<NamedCheck>& registry() {
  static const std::vector<NamedCheck> checks = {
      {"bcd-convergence", [](const VerifyOptions&) { return check_bcd_convergence(); }},
      {"bcd-descent", [](const VerifyOptions&) { return check_bcd_descent(); }},
      {"gradient", [](const VerifyOptions&) { return check_gradient(); }},
      {"mse-dominance", [](const VerifyOptions&) { return check_mse_dominance(); }},
      {"estimate-identity", [](const VerifyOptions&) { return check_estimate_identity(); }},
      {"lrd-exact", [](const VerifyOptions&) { return check_lrd_exact(); }},
      {"ledger", [](const VerifyOptions& o) { return check_ledger(o.ledger_fault); }},
      {"degenerate", [](const VerifyOptions&) { return check_degenerate(); }},
  };
  return checks;
}

}  // namespace

std::vector<std::string> check_names() {
  std::vector<std::string> names;
  for (const auto& c : registry()) names.emplace_back(c.name);
  return names;
}

std::vector<CheckResult> run_checks(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  for (const auto& c : registry()) {
    if (std::string(c.name).find(opts.filter) == std::string::npos) continue;
    try {
      out.push_back(c.run(opts));
    } catch (const std::exception& e) {
      out.push_back({c.name, false, std::string("exception: ") + e.what()});
    }
  }
  return out;
}

}  // namespace dbpeq
