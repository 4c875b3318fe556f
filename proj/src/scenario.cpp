#include "dbpeq/scenario.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace dbpeq {

namespace {

constexpr std::uint64_t kChannelStream = 1;
constexpr std::uint64_t kSymbolStream = 2;

// One-ring geometry: UEs spread over a 120 degree sector, each seen through
// a small cluster of scatterers around its mean angle.
constexpr double kSectorHalfWidthDeg = 60.0;
constexpr double kAngularSpreadDeg = 5.0;
constexpr int kRingPaths = 20;

// Gray code position -> 2-bit label and back, per axis.
constexpr std::array<int, 4> kGrayLabel{0, 1, 3, 2};
constexpr std::array<int, 4> kGrayPosition{0, 1, 3, 2};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

CMatrix one_ring_channel(int M, int users, std::mt19937_64& rng) {
  constexpr double deg = std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> center(-kSectorHalfWidthDeg, kSectorHalfWidthDeg);
  std::uniform_real_distribution<double> offset(-kAngularSpreadDeg, kAngularSpreadDeg);
  CMatrix h = CMatrix::Zero(M, users);
  const double gain_scale = 1.0 / std::sqrt(static_cast<double>(kRingPaths));
  for (int k = 0; k < users; ++k) {
    const double theta = center(rng);
    const CMatrix gains = complex_gaussian(kRingPaths, 1, rng);
    for (int p = 0; p < kRingPaths; ++p) {
      const double phi = (theta + offset(rng)) * deg;
      for (int m = 0; m < M; ++m) {
        // half-wavelength ULA steering vector
        const double phase = -std::numbers::pi * m * std::sin(phi);
        h(m, k) += gains(p, 0) * gain_scale * cdouble(std::cos(phase), std::sin(phase));
      }
    }
  }
  return h;
}

CMatrix draw_channel(const SystemConfig& cfg, int users, std::mt19937_64& rng) {
  switch (cfg.channel_model) {
    case ChannelModel::kOneRing:
      return one_ring_channel(cfg.M, users, rng);
    case ChannelModel::kRayleigh:
    default:
      return complex_gaussian(cfg.M, users, rng);
  }
}

// sqrt(beta Es) Hbar w + sqrt(N0) z, one column per draw.
CMatrix colored_noise(const Realization& r, double Es, Eigen::Index cols, std::mt19937_64& rng) {
  const Eigen::Index M = r.H.rows();
  const CMatrix w = complex_gaussian(r.Hbar.cols(), cols, rng);
  const CMatrix z = complex_gaussian(M, cols, rng);
  CMatrix n = std::sqrt(r.powers.N0) * z;
  if (r.powers.beta > 0.0 && r.Hbar.cols() > 0) {
    n += std::sqrt(r.powers.beta * Es) * (r.Hbar * w);
  }
  return n;
}

double axis_scale(Modulation m, double Es) {
  return m == Modulation::kQam16 ? std::sqrt(Es / 10.0) : std::sqrt(Es / 2.0);
}

}  // namespace

std::string to_string(Modulation m) { return m == Modulation::kQpsk ? "qpsk" : "qam16"; }

std::string to_string(ChannelModel m) {
  return m == ChannelModel::kOneRing ? "one_ring" : "rayleigh";
}

Modulation parse_modulation(const std::string& s) {
  if (s == "qpsk" || s == "QPSK") return Modulation::kQpsk;
  if (s == "qam16" || s == "QAM16" || s == "16qam") return Modulation::kQam16;
  throw ConfigError("modulation: unknown value '" + s + "'");
}

ChannelModel parse_channel_model(const std::string& s) {
  if (s == "rayleigh") return ChannelModel::kRayleigh;
  if (s == "one_ring") return ChannelModel::kOneRing;
  throw ConfigError("channel: unknown value '" + s + "'");
}

void SystemConfig::validate() const {
  if (K < 1) throw ConfigError("K: must be >= 1");
  if (M <= K) throw ConfigError("M: must exceed K");
  if (C < 1) throw ConfigError("C: must be >= 1");
  if (C > M) throw ConfigError("C: more clusters than antennas");
  if (N <= K) throw ConfigError("N: must exceed K");
  if (!(Es > 0.0)) throw ConfigError("Es: must be positive");
  if (!(iot_db >= 0.0)) throw ConfigError("iot_db: must be >= 0");
  if (n_coh < 1) throw ConfigError("n_coh: must be >= 1");
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db: must be finite");
}

NoisePowers derive_powers(const SystemConfig& cfg) {
  const double n0 = cfg.Es / std::pow(10.0, cfg.snr_db / 10.0);
  const double beta = n0 * (std::pow(10.0, cfg.iot_db / 10.0) - 1.0) / cfg.Es;
  return {n0, std::max(beta, 0.0)};
}

ClusterPartition make_partition(int M, int C) {
  if (C < 1 || M < C) throw ConfigError("partition: need 1 <= C <= M");
  ClusterPartition p;
  const int base = M / C;
  const int extra = M % C;
  int offset = 0;
  for (int c = 0; c < C; ++c) {
    const int size = base + (c < extra ? 1 : 0);
    p.sizes.push_back(size);
    p.offsets.push_back(offset);
    offset += size;
  }
  return p;
}

CMatrix cluster_rows(const CMatrix& x, const ClusterPartition& p, int c) {
  return x.middleRows(p.offsets.at(c), p.sizes.at(c));
}

std::vector<CMatrix> split_rows(const CMatrix& x, const ClusterPartition& p) {
  if (x.rows() != p.total()) throw ShapeMismatch("split_rows: row count does not match partition");
  std::vector<CMatrix> out;
  out.reserve(p.sizes.size());
  for (int c = 0; c < p.count(); ++c) out.push_back(cluster_rows(x, p, c));
  return out;
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream) {
  return splitmix64(splitmix64(splitmix64(seed) ^ trial) ^ (stream * 0xd1b54a32d192ed03ULL));
}

CMatrix complex_gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  CMatrix out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      out(i, j) = cdouble(re, im);
    }
  }
  return out;
}

Realization gen_realization(const SystemConfig& cfg, std::uint64_t trial) {
  return gen_realization(cfg, trial, derive_powers(cfg));
}

Realization gen_realization(const SystemConfig& cfg, std::uint64_t trial, NoisePowers powers) {
  cfg.validate();
  std::mt19937_64 rng(substream_seed(cfg.seed, trial, kChannelStream));
  Realization r;
  r.partition = make_partition(cfg.M, cfg.C);
  r.powers = powers;
  r.H = draw_channel(cfg, cfg.K, rng);
  // Unit total interference power per antenna, so that IoT is exactly
  // 10 log10((beta Es + N0) / N0) for any interferer count.
  r.Hbar = draw_channel(cfg, cfg.interferers(), rng);
  if (r.Hbar.cols() > 0) r.Hbar /= std::sqrt(static_cast<double>(r.Hbar.cols()));
  r.noise = colored_noise(r, cfg.Es, cfg.N, rng);
  return r;
}

SymbolBlock gen_symbols(const SystemConfig& cfg, const Realization& real, std::uint64_t trial,
                        int n_sym) {
  std::mt19937_64 rng(substream_seed(cfg.seed, trial, kSymbolStream));
  const int order = constellation_order(cfg.modulation);
  std::uniform_int_distribution<int> pick(0, order - 1);
  const auto points = constellation(cfg.modulation, cfg.Es);
  SymbolBlock b;
  b.indices.resize(static_cast<std::size_t>(cfg.K) * n_sym);
  b.S.resize(cfg.K, n_sym);
  for (int j = 0; j < n_sym; ++j) {
    for (int k = 0; k < cfg.K; ++k) {
      const int idx = pick(rng);
      b.indices[static_cast<std::size_t>(j) * cfg.K + k] = idx;
      b.S(k, j) = points[idx];
    }
  }
  b.Y = real.H * b.S + colored_noise(real, cfg.Es, n_sym, rng);
  return b;
}

CMatrix sample_covariance(const CMatrix& noise) {
  if (noise.cols() < 1) throw ShapeMismatch("sample_covariance: need at least one sample");
  const CMatrix r = (noise * noise.adjoint()) / static_cast<double>(noise.cols());
  return hermitize(r);
}

int constellation_order(Modulation m) { return m == Modulation::kQam16 ? 16 : 4; }

cdouble modulate(int index, Modulation m, double Es) {
  const double a = axis_scale(m, Es);
  if (m == Modulation::kQpsk) {
    const double re = (index & 0b10) ? 1.0 : -1.0;
    const double im = (index & 0b01) ? 1.0 : -1.0;
    return {re * a, im * a};
  }
  const int pos_i = kGrayPosition[(index >> 2) & 0b11];
  const int pos_q = kGrayPosition[index & 0b11];
  return {(2.0 * pos_i - 3.0) * a, (2.0 * pos_q - 3.0) * a};
}

std::vector<cdouble> modulate(const std::vector<int>& indices, Modulation m, double Es) {
  std::vector<cdouble> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(modulate(i, m, Es));
  return out;
}

std::vector<cdouble> constellation(Modulation m, double Es) {
  std::vector<cdouble> pts;
  for (int i = 0; i < constellation_order(m); ++i) pts.push_back(modulate(i, m, Es));
  return pts;
}

int slice_index(cdouble x, Modulation m, double Es) {
  const double a = axis_scale(m, Es);
  const double u = x.real() / a;
  const double v = x.imag() / a;
  if (m == Modulation::kQpsk) {
    return ((u >= 0.0) ? 0b10 : 0) | ((v >= 0.0) ? 0b01 : 0);
  }
  auto position = [](double t) { return (t >= -2.0) + (t >= 0.0) + (t >= 2.0); };
  return (kGrayLabel[position(u)] << 2) | kGrayLabel[position(v)];
}

cdouble slice(cdouble x, Modulation m, double Es) { return modulate(slice_index(x, m, Es), m, Es); }

}  // namespace dbpeq
