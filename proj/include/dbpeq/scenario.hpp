#pragma once

// Reproducible experiment instances: configuration, channels, colored-noise
// samples, QAM symbols and the antenna-cluster partition.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dbpeq/numerics.hpp"

namespace dbpeq {

enum class Modulation { kQpsk, kQam16 };
enum class ChannelModel { kRayleigh, kOneRing };

std::string to_string(Modulation m);
std::string to_string(ChannelModel m);
Modulation parse_modulation(const std::string& s);
ChannelModel parse_channel_model(const std::string& s);

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct SystemConfig {
  int M = 32;        // BS antennas
  int K = 4;         // target UEs
  int C = 4;         // antenna clusters / DUs
  int N = 64;        // noise samples (pilot REs)
  double Es = 1.0;   // average symbol energy
  double snr_db = 10.0;
  double iot_db = 10.0;
  int n_interf = -1;  // < 0 means "same as K"
  int n_coh = 480;
  Modulation modulation = Modulation::kQam16;
  ChannelModel channel_model = ChannelModel::kRayleigh;
  std::uint64_t seed = 1;

  int interferers() const { return n_interf < 0 ? K : n_interf; }

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct NoisePowers {
  double N0 = 0.0;    // background AWGN power
  double beta = 0.0;  // interference power, relative to Es
};

/// N0 = Es / 10^(snr/10); beta = N0 (10^(iot/10) - 1) / Es.
NoisePowers derive_powers(const SystemConfig& cfg);

struct ClusterPartition {
  std::vector<int> sizes;
  std::vector<int> offsets;

  int count() const { return static_cast<int>(sizes.size()); }
  int total() const { return offsets.empty() ? 0 : offsets.back() + sizes.back(); }
};

/// Balanced split: the first M mod C clusters get ceil(M/C) antennas.
ClusterPartition make_partition(int M, int C);

/// Row block of cluster c (0-based).
CMatrix cluster_rows(const CMatrix& x, const ClusterPartition& p, int c);
std::vector<CMatrix> split_rows(const CMatrix& x, const ClusterPartition& p);

struct Realization {
  CMatrix H;      // M x K target channel
  CMatrix Hbar;   // M x n_interf interference channel, columns scaled by 1/sqrt(n_interf)
  CMatrix noise;  // M x N, columns are noise samples
  ClusterPartition partition;
  NoisePowers powers;
};

struct SymbolBlock {
  std::vector<int> indices;  // K * n_sym, column-major like S
  CMatrix S;                 // K x n_sym
  CMatrix Y;                 // M x n_sym
};

/// Per-trial substream seed: splitmix64 mix of (seed, trial, stream).
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream);

/// Standard circularly-symmetric complex Gaussian matrix, CN(0, 1) entries.
CMatrix complex_gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// Channel draws depend only on (seed, trial), so different SNR points of a
/// sweep see the same channels and unit-variance noise draws.
Realization gen_realization(const SystemConfig& cfg, std::uint64_t trial);
/// Same draws with explicit powers (e.g. N0 = 0 for pure interference).
Realization gen_realization(const SystemConfig& cfg, std::uint64_t trial, NoisePowers powers);

/// n_sym uniform constellation symbols through Y = H S + n, with n drawn from
/// the realization's noise model.
SymbolBlock gen_symbols(const SystemConfig& cfg, const Realization& real, std::uint64_t trial,
                        int n_sym);

/// (1/N) noise * noise^H, hermitized.
CMatrix sample_covariance(const CMatrix& noise);

int constellation_order(Modulation m);
/// All constellation points, indexed by symbol index (Gray mapped).
std::vector<cdouble> constellation(Modulation m, double Es);
cdouble modulate(int index, Modulation m, double Es);
std::vector<cdouble> modulate(const std::vector<int>& indices, Modulation m, double Es);
/// Euclidean-nearest symbol index. Exact midpoints resolve toward the larger
/// coordinate on each axis.
int slice_index(cdouble x, Modulation m, double Es);
cdouble slice(cdouble x, Modulation m, double Es);

}  // namespace dbpeq
