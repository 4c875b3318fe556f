#pragma once

// Simulated decentralized-baseband-processing fabric.
//
// DUs exchange Messages over a star (DU <-> CU) or a unidirectional ring
// (DU c -> DU c+1, DU C -> DU 1). Every message is logged and counted in
// real-valued entries (one complex entry = 2 reals). The fabric is an
// in-process ordered queue; one fabric is single-threaded.
//
// Ring passes are full circulations: each DU transmits exactly once per
// pass, and the last DU's transmission closes the ring at DU 1 (the head,
// which also outputs symbol estimates). A broadcast started at the head
// returns to it, token-ring style.

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dbpeq/equalizers.hpp"
#include "dbpeq/scenario.hpp"

namespace dbpeq {

inline constexpr int kCentralUnit = 0;

enum class Phase { kPreprocessing, kIteration, kSymbolEstimation, kLrd };

enum class PayloadKind {
  kRawChannel,     // H_c, centralized baseline
  kRawNoise,       // noise_c
  kRawSignal,      // y_c
  kCompressedH,    // Q_c H_c
  kCompressedNoise,// Q_c n_c
  kCompressedY,    // Q_c y_c
  kGramPartial,    // running sum of H_c^H R_cc^{-1} H_c
  kSamplePartial,  // running sum of Q_c Z_c
  kGain,           // BDAC gain (S + I/Es)^{-1}
  kAmat,
  kBmat,
  kDmat,
  kVmat,
  kSymbolPartial,
};

std::string to_string(Phase p);
std::string to_string(PayloadKind k);
std::string node_name(int node);

struct Message {
  Phase phase = Phase::kPreprocessing;
  int iteration = 0;  // sweep index for Phase::kIteration
  int src = 0;
  int dst = 0;
  PayloadKind kind = PayloadKind::kAmat;
  CMatrix payload;

  std::int64_t real_entries() const { return 2 * payload.rows() * payload.cols(); }
};

/// Payload-free record of a sent message.
struct MessageRecord {
  Phase phase;
  int iteration;
  int src;
  int dst;
  PayloadKind kind;
  Eigen::Index rows;
  Eigen::Index cols;
  std::int64_t real_entries;

  /// `phase,src,dst,payload_kind,rows,cols,real_entries`
  std::string to_csv_line() const;
};

/// Exact non-negative rational, always reduced.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d = 1);

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend Rational operator+(const Rational& a, const Rational& b);
  friend bool operator==(const Rational& a, const Rational& b) = default;
};

std::string to_string(const Rational& r);

class BandwidthLedger {
 public:
  void record(const Message& m);

  std::int64_t phase_total(Phase p) const;
  std::int64_t iteration_total(int sweep) const;
  int iterations() const { return static_cast<int>(iteration_.size()); }
  /// Preprocessing + iterations + LRD: paid once per coherence block.
  std::int64_t one_time_total() const;
  std::int64_t symbol_total() const { return symbol_; }
  std::int64_t total() const { return one_time_total() + symbol_; }
  const std::map<std::pair<int, int>, std::int64_t>& links() const { return links_; }

  void set_symbol_count(std::int64_t n) { symbols_ = n; }
  std::int64_t symbol_count() const { return symbols_; }

  /// one_time / n_coh + symbol_total / symbols processed.
  Rational average_per_symbol(int n_coh) const;

  /// Test hook: perturbs the preprocessing counter.
  void inject_fault(std::int64_t delta) { preprocessing_ += delta; }

 private:
  std::int64_t preprocessing_ = 0;
  std::vector<std::int64_t> iteration_;
  std::int64_t symbol_ = 0;
  std::int64_t lrd_ = 0;
  std::int64_t symbols_ = 0;
  std::map<std::pair<int, int>, std::int64_t> links_;
};

enum class TopologyKind { kStar, kDaisy };

struct Topology {
  TopologyKind kind = TopologyKind::kStar;
  int C = 1;

  /// Successor of DU c on the ring (1-based ids).
  int next(int du) const { return du % C + 1; }
  bool permits(int src, int dst) const;
};

class LinkError : public Error {
 public:
  using Error::Error;
};

/// Counts reads of raw DU data by anyone other than the owning DU.
struct AccessTrace {
  std::int64_t own_reads = 0;
  std::int64_t foreign_reads = 0;
};

/// One distributed unit: owns its cluster's channel, noise samples and
/// received signals. Raw data is reachable only through local(), which
/// records who asked.
class DuNode {
 public:
  DuNode(int id, CMatrix H, CMatrix noise, CMatrix y, AccessTrace* trace = nullptr);

  int id() const { return id_; }

  struct LocalData {
    const CMatrix& H;
    const CMatrix& noise;
    const CMatrix& y;
  };
  LocalData local(int requester) const;

  /// DU-private working memory used by the protocols.
  struct Scratch {
    CMatrix Q;  // local compression H_c^H R_cc^{-1}
    CMatrix P;  // Q H_c
    CMatrix Z;  // sample factor (scaled noise or G_c)
    CMatrix W;  // current local equalizer
    std::optional<BcdBlock> bcd;
  };
  Scratch scratch;

 private:
  int id_;
  CMatrix H_;
  CMatrix noise_;
  CMatrix y_;
  AccessTrace* trace_;
};

/// Builds DUs 1..C from a realization and received block Y (M x n_sym).
std::vector<DuNode> make_dus(const Realization& real, const CMatrix& Y,
                             AccessTrace* trace = nullptr);

class Fabric {
 public:
  explicit Fabric(Topology topology);

  const Topology& topology() const { return topology_; }

  /// Queues m for m.dst. A DU sending to itself is a local hand-off and is
  /// neither logged nor counted.
  void send(Message m);
  Message receive(int node);
  std::size_t pending(int node) const;

  const BandwidthLedger& ledger() const { return ledger_; }
  BandwidthLedger& ledger() { return ledger_; }
  const std::vector<MessageRecord>& log() const { return log_; }
  void write_log(std::ostream& os) const;

 private:
  Topology topology_;
  BandwidthLedger ledger_;
  std::vector<MessageRecord> log_;
  std::map<int, std::deque<Message>> inbox_;
};

struct ProtocolResult {
  /// Antenna-domain equalizer when the protocol materializes one (blocks
  /// live at the DUs); empty for star protocols whose CU only sees
  /// compressed data.
  EqualizerResult eq;
  /// CU-side equalizer in compressed coordinates (sDR/cDR), else empty.
  CMatrix W_compressed;
  CMatrix s_hat;  // K x n_sym
  std::vector<CMatrix> G;  // LRD factors, when run
  int sweeps = 0;
};

/// Raw shipping of H_c, noise_c (LMMSE only) and y_c to the CU.
ProtocolResult run_centralized_star(Fabric& f, std::span<DuNode> dus, double Es, bool zero_forcing);
ProtocolResult run_sdr_star(Fabric& f, std::span<DuNode> dus, double Es);
ProtocolResult run_cdr_star(Fabric& f, std::span<DuNode> dus, double Es);
/// BDAC over either topology.
ProtocolResult run_bdac(Fabric& f, std::span<DuNode> dus, double Es);

struct BcdProtocolOptions {
  int sweeps = 4;
  /// > 0: sweep until relative change of W < tol (driver-side stopping rule).
  double tol = 0.0;
  int max_sweeps = 100000;
  bool use_lrd = false;
  RankRule rank;
};

ProtocolResult run_bcd_daisy(Fabric& f, std::span<DuNode> dus, double Es,
                             const BcdProtocolOptions& opts);
/// Sequential truncated-SVD relay; leaves G_c in each DU's scratch.Z.
std::vector<CMatrix> run_lrd_daisy(Fabric& f, std::span<DuNode> dus, const RankRule& rule);

// ---------------------------------------------------------------------------
// Closed-form average entries per symbol
// ---------------------------------------------------------------------------

enum class Algorithm { kZf, kLmmse, kBdac, kSdr, kCdr, kBcd, kBcdLrd };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);
TopologyKind topology_for(Algorithm a);

struct BandwidthParams {
  int M = 0;
  int K = 0;
  int C = 1;
  int N = 0;
  int T = 0;
  int r = 0;
  int n_coh = 1;
};

/// Average real-valued entries transferred per symbol:
///   lmmse   2M(n_coh + K + N)/n_coh
///   sdr/cdr 2CK(n_coh + K + N)/n_coh
///   bcd     C(4K^2 + 2NK)/n_coh + 2TCK(N + K)/n_coh + 2CK
///   bcd-lrd ((C-1)Mr + 4CNr)/n_coh + C(4K^2 + 2Kr)/n_coh + 2TCK(r + K)/n_coh + 2CK
///   zf      2M(n_coh + K)/n_coh          (no noise samples shipped)
///   bdac    4CK^2/n_coh + 2CK
Rational bandwidth_formula(Algorithm a, const BandwidthParams& p);

}  // namespace dbpeq
