#include "dbpeq/dbpnet.hpp"

#include <numeric>
#include <ostream>
#include <sstream>

namespace dbpeq {

std::string to_string(Phase p) {
  switch (p) {
    case Phase::kPreprocessing: return "preprocessing";
    case Phase::kIteration: return "iteration";
    case Phase::kSymbolEstimation: return "symbol_estimation";
    case Phase::kLrd: return "lrd";
  }
  return "unknown";
}

std::string to_string(PayloadKind k) {
  switch (k) {
    case PayloadKind::kRawChannel: return "raw_channel";
    case PayloadKind::kRawNoise: return "raw_noise";
    case PayloadKind::kRawSignal: return "raw_signal";
    case PayloadKind::kCompressedH: return "compressed_channel";
    case PayloadKind::kCompressedNoise: return "compressed_noise";
    case PayloadKind::kCompressedY: return "compressed_signal";
    case PayloadKind::kGramPartial: return "gram_partial";
    case PayloadKind::kSamplePartial: return "sample_partial";
    case PayloadKind::kGain: return "gain";
    case PayloadKind::kAmat: return "A";
    case PayloadKind::kBmat: return "B";
    case PayloadKind::kDmat: return "D";
    case PayloadKind::kVmat: return "V";
    case PayloadKind::kSymbolPartial: return "symbol_partial";
  }
  return "unknown";
}

std::string node_name(int node) {
  return node == kCentralUnit ? "cu" : "du" + std::to_string(node);
}

std::string MessageRecord::to_csv_line() const {
  std::ostringstream os;
  os << to_string(phase);
  if (phase == Phase::kIteration) os << iteration;
  os << ',' << node_name(src) << ',' << node_name(dst) << ',' << to_string(kind) << ',' << rows
     << ',' << cols << ',' << real_entries;
  return os.str();
}

Rational::Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
  if (den == 0) throw Error("Rational: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
}

Rational operator+(const Rational& a, const Rational& b) {
  const std::int64_t g = std::gcd(a.den, b.den);
  return Rational(a.num * (b.den / g) + b.num * (a.den / g), a.den / g * b.den);
}

std::string to_string(const Rational& r) {
  return r.den == 1 ? std::to_string(r.num) : std::to_string(r.num) + "/" + std::to_string(r.den);
}

void BandwidthLedger::record(const Message& m) {
  const std::int64_t n = m.real_entries();
  switch (m.phase) {
    case Phase::kPreprocessing: preprocessing_ += n; break;
    case Phase::kIteration:
      if (m.iteration < 1) throw Error("ledger: iteration messages need a sweep index >= 1");
      if (static_cast<std::size_t>(m.iteration) > iteration_.size()) iteration_.resize(m.iteration, 0);
      iteration_[m.iteration - 1] += n;
      break;
    case Phase::kSymbolEstimation: symbol_ += n; break;
    case Phase::kLrd: lrd_ += n; break;
  }
  links_[{m.src, m.dst}] += n;
}

std::int64_t BandwidthLedger::phase_total(Phase p) const {
  switch (p) {
    case Phase::kPreprocessing: return preprocessing_;
    case Phase::kIteration: return std::accumulate(iteration_.begin(), iteration_.end(), std::int64_t{0});
    case Phase::kSymbolEstimation: return symbol_;
    case Phase::kLrd: return lrd_;
  }
  return 0;
}

std::int64_t BandwidthLedger::iteration_total(int sweep) const {
  if (sweep < 1 || sweep > iterations()) return 0;
  return iteration_[sweep - 1];
}

std::int64_t BandwidthLedger::one_time_total() const {
  return preprocessing_ + phase_total(Phase::kIteration) + lrd_;
}

Rational BandwidthLedger::average_per_symbol(int n_coh) const {
  Rational avg(one_time_total(), n_coh);
  if (symbols_ > 0) avg = avg + Rational(symbol_, symbols_);
  return avg;
}

bool Topology::permits(int src, int dst) const {
  auto is_du = [this](int n) { return n >= 1 && n <= C; };
  if (kind == TopologyKind::kStar) {
    return (is_du(src) && dst == kCentralUnit) || (src == kCentralUnit && is_du(dst));
  }
  return is_du(src) && dst == next(src);
}

DuNode::DuNode(int id, CMatrix H, CMatrix noise, CMatrix y, AccessTrace* trace)
    : id_(id), H_(std::move(H)), noise_(std::move(noise)), y_(std::move(y)), trace_(trace) {}

DuNode::LocalData DuNode::local(int requester) const {
  if (trace_) {
    if (requester == id_) {
      ++trace_->own_reads;
    } else {
      ++trace_->foreign_reads;
    }
  }
  return LocalData{H_, noise_, y_};
}

std::vector<DuNode> make_dus(const Realization& real, const CMatrix& Y, AccessTrace* trace) {
  const auto& p = real.partition;
  std::vector<DuNode> dus;
  dus.reserve(p.sizes.size());
  for (int c = 0; c < p.count(); ++c) {
    dus.emplace_back(c + 1, cluster_rows(real.H, p, c), cluster_rows(real.noise, p, c),
                     cluster_rows(Y, p, c), trace);
  }
  return dus;
}

Fabric::Fabric(Topology topology) : topology_(topology) {}

void Fabric::send(Message m) {
  const int dst = m.dst;
  if (m.src != dst) {
    if (!topology_.permits(m.src, dst)) {
      throw LinkError("fabric: no link " + node_name(m.src) + " -> " + node_name(dst));
    }
    ledger_.record(m);
    log_.push_back(MessageRecord{m.phase, m.iteration, m.src, dst, m.kind, m.payload.rows(),
                                 m.payload.cols(), m.real_entries()});
  }
  inbox_[dst].push_back(std::move(m));
}

Message Fabric::receive(int node) {
  auto it = inbox_.find(node);
  if (it == inbox_.end() || it->second.empty()) {
    throw LinkError("fabric: " + node_name(node) + " has no pending message");
  }
  Message m = std::move(it->second.front());
  it->second.pop_front();
  return m;
}

std::size_t Fabric::pending(int node) const {
  auto it = inbox_.find(node);
  return it == inbox_.end() ? 0 : it->second.size();
}

void Fabric::write_log(std::ostream& os) const {
  os << "phase,src,dst,payload_kind,rows,cols,real_entries\n";
  for (const auto& r : log_) os << r.to_csv_line() << '\n';
}

namespace {

void post(Fabric& f, Phase phase, int iteration, int src, int dst, PayloadKind kind,
          CMatrix payload) {
  f.send(Message{phase, iteration, src, dst, kind, std::move(payload)});
}

CMatrix take(Fabric& f, int node, PayloadKind expected) {
  Message m = f.receive(node);
  if (m.kind != expected) {
    throw LinkError("fabric: " + node_name(node) + " expected " + to_string(expected) + ", got " +
                    to_string(m.kind));
  }
  return std::move(m.payload);
}

void require_topology(const Fabric& f, TopologyKind kind, std::span<DuNode> dus, const char* who) {
  if (f.topology().kind != kind) throw LinkError(std::string(who) + ": wrong topology");
  if (static_cast<int>(dus.size()) != f.topology().C) {
    throw LinkError(std::string(who) + ": DU count does not match topology");
  }
}

std::int64_t symbol_count(std::span<DuNode> dus) {
  return dus.empty() ? 0 : dus[0].local(dus[0].id()).y.cols();
}

// DU-side: Q_c and P_c from the local covariance.
void compute_local_compression(DuNode& du) {
  const auto local = du.local(du.id());
  const LocalCompression lc = local_compression(local.H, sample_covariance(local.noise));
  du.scratch.Q = lc.Q;
  du.scratch.P = lc.P;
}

// Head-started ring pass accumulating sum_c W_c y_c; returns the estimate
// delivered back at the head.
CMatrix ring_symbol_pass(Fabric& f, std::span<DuNode> dus) {
  const int C = static_cast<int>(dus.size());
  CMatrix s;
  for (int c = 1; c <= C; ++c) {
    DuNode& du = dus[c - 1];
    const CMatrix contrib = du.scratch.W * du.local(du.id()).y;
    s = (c == 1) ? contrib : CMatrix(take(f, c, PayloadKind::kSymbolPartial) + contrib);
    post(f, Phase::kSymbolEstimation, 0, c, f.topology().next(c), PayloadKind::kSymbolPartial, s);
  }
  f.ledger().set_symbol_count(symbol_count(dus));
  return take(f, 1, PayloadKind::kSymbolPartial);
}

// Ring broadcast of the BDAC gain from the head; each DU sets W_c = gain Q_c.
void ring_broadcast_gain(Fabric& f, std::span<DuNode> dus, const CMatrix& gain) {
  const int C = static_cast<int>(dus.size());
  CMatrix held = gain;
  for (int c = 1; c <= C; ++c) {
    if (c > 1) held = take(f, c, PayloadKind::kGain);
    dus[c - 1].scratch.W = held * dus[c - 1].scratch.Q;
    post(f, Phase::kPreprocessing, 0, c, f.topology().next(c), PayloadKind::kGain, held);
  }
  take(f, 1, PayloadKind::kGain);
}

std::vector<CMatrix> collect_W(std::span<DuNode> dus) {
  std::vector<CMatrix> blocks;
  for (auto& du : dus) blocks.push_back(du.scratch.W);
  return blocks;
}

}  // namespace

ProtocolResult run_centralized_star(Fabric& f, std::span<DuNode> dus, double Es,
                                    bool zero_forcing) {
  require_topology(f, TopologyKind::kStar, dus, "centralized");
  for (auto& du : dus) {
    const auto local = du.local(du.id());
    post(f, Phase::kPreprocessing, 0, du.id(), kCentralUnit, PayloadKind::kRawChannel, local.H);
    if (!zero_forcing) {
      post(f, Phase::kPreprocessing, 0, du.id(), kCentralUnit, PayloadKind::kRawNoise, local.noise);
    }
  }
  for (auto& du : dus) {
    post(f, Phase::kSymbolEstimation, 0, du.id(), kCentralUnit, PayloadKind::kRawSignal,
         du.local(du.id()).y);
  }
  f.ledger().set_symbol_count(symbol_count(dus));

  std::vector<CMatrix> hs, ns, ys;
  ClusterPartition part;
  int offset = 0;
  for (auto& du : dus) {
    hs.push_back(take(f, kCentralUnit, PayloadKind::kRawChannel));
    if (!zero_forcing) ns.push_back(take(f, kCentralUnit, PayloadKind::kRawNoise));
    part.sizes.push_back(static_cast<int>(hs.back().rows()));
    part.offsets.push_back(offset);
    offset += part.sizes.back();
    (void)du;
  }
  for (std::size_t c = 0; c < dus.size(); ++c) ys.push_back(take(f, kCentralUnit, PayloadKind::kRawSignal));

  const CMatrix H = vstack(hs);
  CMatrix W = zero_forcing ? zf_centralized(H).W
                           : lmmse_centralized(H, sample_covariance(vstack(ns)), Es).W;
  ProtocolResult out;
  out.s_hat = W * vstack(ys);
  out.eq = EqualizerResult::from_matrix(std::move(W), part, zero_forcing ? "zf" : "lmmse");
  return out;
}

namespace {

ProtocolResult run_dr_star(Fabric& f, std::span<DuNode> dus, double Es, bool concatenated) {
  require_topology(f, TopologyKind::kStar, dus, concatenated ? "cdr" : "sdr");
  for (auto& du : dus) {
    compute_local_compression(du);
    const auto local = du.local(du.id());
    const CompressedView v = compress_cluster(du.scratch.Q, local.H, local.y, local.noise);
    post(f, Phase::kPreprocessing, 0, du.id(), kCentralUnit, PayloadKind::kCompressedH, v.QH);
    post(f, Phase::kPreprocessing, 0, du.id(), kCentralUnit, PayloadKind::kCompressedNoise, v.Qn);
    post(f, Phase::kSymbolEstimation, 0, du.id(), kCentralUnit, PayloadKind::kCompressedY, v.Qy);
  }
  f.ledger().set_symbol_count(symbol_count(dus));

  std::vector<CompressedView> views;
  for (std::size_t c = 0; c < dus.size(); ++c) {
    CompressedView v;
    v.QH = take(f, kCentralUnit, PayloadKind::kCompressedH);
    v.Qn = take(f, kCentralUnit, PayloadKind::kCompressedNoise);
    v.Qy = take(f, kCentralUnit, PayloadKind::kCompressedY);
    views.push_back(std::move(v));
  }
  const DrOutput dr = concatenated ? cdr_combine(views, Es) : sdr_combine(views, Es);
  ProtocolResult out;
  out.W_compressed = dr.W;
  out.s_hat = dr.s_hat;
  out.eq.algorithm = concatenated ? "cdr" : "sdr";
  return out;
}

}  // namespace

ProtocolResult run_sdr_star(Fabric& f, std::span<DuNode> dus, double Es) {
  return run_dr_star(f, dus, Es, false);
}

ProtocolResult run_cdr_star(Fabric& f, std::span<DuNode> dus, double Es) {
  return run_dr_star(f, dus, Es, true);
}

ProtocolResult run_bdac(Fabric& f, std::span<DuNode> dus, double Es) {
  if (static_cast<int>(dus.size()) != f.topology().C) throw LinkError("bdac: DU count mismatch");
  for (auto& du : dus) compute_local_compression(du);

  ProtocolResult out;
  if (f.topology().kind == TopologyKind::kStar) {
    for (auto& du : dus) {
      post(f, Phase::kPreprocessing, 0, du.id(), kCentralUnit, PayloadKind::kGramPartial, du.scratch.P);
    }
    CMatrix S = take(f, kCentralUnit, PayloadKind::kGramPartial);
    for (std::size_t c = 1; c < dus.size(); ++c) S += take(f, kCentralUnit, PayloadKind::kGramPartial);
    const CMatrix gain = bdac_gain(S, Es);
    for (auto& du : dus) post(f, Phase::kPreprocessing, 0, kCentralUnit, du.id(), PayloadKind::kGain, gain);
    for (auto& du : dus) du.scratch.W = take(f, du.id(), PayloadKind::kGain) * du.scratch.Q;

    for (auto& du : dus) {
      post(f, Phase::kSymbolEstimation, 0, du.id(), kCentralUnit, PayloadKind::kSymbolPartial,
           du.scratch.W * du.local(du.id()).y);
    }
    f.ledger().set_symbol_count(symbol_count(dus));
    CMatrix s = take(f, kCentralUnit, PayloadKind::kSymbolPartial);
    for (std::size_t c = 1; c < dus.size(); ++c) s += take(f, kCentralUnit, PayloadKind::kSymbolPartial);
    out.s_hat = std::move(s);
  } else {
    const int C = static_cast<int>(dus.size());
    CMatrix S;
    for (int c = 1; c <= C; ++c) {
      const CMatrix& P = dus[c - 1].scratch.P;
      S = (c == 1) ? P : CMatrix(take(f, c, PayloadKind::kGramPartial) + P);
      post(f, Phase::kPreprocessing, 0, c, f.topology().next(c), PayloadKind::kGramPartial, S);
    }
    S = take(f, 1, PayloadKind::kGramPartial);
    ring_broadcast_gain(f, dus, bdac_gain(S, Es));
    out.s_hat = ring_symbol_pass(f, dus);
  }
  out.eq = EqualizerResult::from_blocks(collect_W(dus), "bdac");
  return out;
}

std::vector<CMatrix> run_lrd_daisy(Fabric& f, std::span<DuNode> dus, const RankRule& rule) {
  require_topology(f, TopologyKind::kDaisy, dus, "lrd");
  const int C = static_cast<int>(dus.size());
  Eigen::Index total_rows = 0;
  for (auto& du : dus) {
    const auto local = du.local(du.id());
    du.scratch.Z = scaled_samples(local.noise);
    total_rows += local.noise.rows();
  }
  const Eigen::Index n = dus[0].scratch.Z.cols();
  if (rule.rank > std::min(total_rows, n)) {
    throw RankOutOfRange("lrd: rank " + std::to_string(rule.rank) + " exceeds min(M, N)");
  }

  // Relay: DU c hands (D_c, V_c) to DU c+1; DU C closes the ring with V_C.
  LrdHop hop;
  for (int c = 1; c <= C; ++c) {
    if (c == 1) {
      hop = lrd_step(nullptr, dus[0].scratch.Z, rule);
    } else {
      LrdHop in;
      in.D = take(f, c, PayloadKind::kDmat);
      in.V = take(f, c, PayloadKind::kVmat);
      hop = lrd_step(&in, dus[c - 1].scratch.Z, rule);
    }
    if (c < C) post(f, Phase::kLrd, 0, c, c + 1, PayloadKind::kDmat, hop.D);
    post(f, Phase::kLrd, 0, c, f.topology().next(c), PayloadKind::kVmat, hop.V);
    if (c < C) hop = LrdHop{};
  }
  // The head now holds V_C and circulates it around the ring.
  CMatrix v = take(f, 1, PayloadKind::kVmat);
  std::vector<CMatrix> G;
  for (int c = 1; c <= C; ++c) {
    if (c > 1) v = take(f, c, PayloadKind::kVmat);
    DuNode& du = dus[c - 1];
    du.scratch.Z = du.scratch.Z * v;
    G.push_back(du.scratch.Z);
    post(f, Phase::kLrd, 0, c, f.topology().next(c), PayloadKind::kVmat, v);
  }
  take(f, 1, PayloadKind::kVmat);
  return G;
}

ProtocolResult run_bcd_daisy(Fabric& f, std::span<DuNode> dus, double Es,
                             const BcdProtocolOptions& opts) {
  require_topology(f, TopologyKind::kDaisy, dus, "bcd");
  const int C = static_cast<int>(dus.size());
  ProtocolResult out;

  if (opts.use_lrd) {
    out.G = run_lrd_daisy(f, dus, opts.rank);
  } else {
    for (auto& du : dus) du.scratch.Z = scaled_samples(du.local(du.id()).noise);
  }
  for (auto& du : dus) {
    const auto local = du.local(du.id());
    const CMatrix R_cc = sample_covariance(local.noise);
    const LocalCompression lc = local_compression(local.H, R_cc);
    du.scratch.Q = lc.Q;
    du.scratch.P = lc.P;
    du.scratch.bcd.emplace(local.H, du.scratch.Z, Es, opts.use_lrd ? &R_cc : nullptr);
  }

  // Preprocessing: one gather pass for S = sum P_c and T = sum Q_c Z_c, then
  // the head computes the BDAC gain and circulates it.
  CMatrix S, T;
  for (int c = 1; c <= C; ++c) {
    DuNode& du = dus[c - 1];
    const CMatrix QZ = du.scratch.Q * du.scratch.Z;
    if (c == 1) {
      S = du.scratch.P;
      T = QZ;
    } else {
      S = take(f, c, PayloadKind::kGramPartial) + du.scratch.P;
      T = take(f, c, PayloadKind::kSamplePartial) + QZ;
    }
    post(f, Phase::kPreprocessing, 0, c, f.topology().next(c), PayloadKind::kGramPartial, S);
    post(f, Phase::kPreprocessing, 0, c, f.topology().next(c), PayloadKind::kSamplePartial, T);
  }
  S = take(f, 1, PayloadKind::kGramPartial);
  T = take(f, 1, PayloadKind::kSamplePartial);
  const CMatrix gain = bdac_gain(S, Es);
  CMatrix A = gain * S;
  CMatrix B = gain * T;
  ring_broadcast_gain(f, dus, gain);

  const bool to_tolerance = opts.tol > 0.0;
  const int budget = to_tolerance ? opts.max_sweeps : opts.sweeps;
  int done = 0;
  for (int sweep = 1; sweep <= budget; ++sweep) {
    double change = 0.0;
    double norm = 0.0;
    for (int c = 1; c <= C; ++c) {
      if (!(sweep == 1 && c == 1)) {
        A = take(f, c, PayloadKind::kAmat);
        B = take(f, c, PayloadKind::kBmat);
      }
      DuNode& du = dus[c - 1];
      CMatrix W_new = du.scratch.bcd->update(A, B, du.scratch.W);
      du.scratch.bcd->advance(A, B, du.scratch.W, W_new);
      change += (W_new - du.scratch.W).squaredNorm();
      norm += W_new.squaredNorm();
      du.scratch.W = std::move(W_new);
      post(f, Phase::kIteration, sweep, c, f.topology().next(c), PayloadKind::kAmat, A);
      post(f, Phase::kIteration, sweep, c, f.topology().next(c), PayloadKind::kBmat, B);
    }
    done = sweep;
    if (to_tolerance && std::sqrt(change) <= opts.tol * std::sqrt(norm)) break;
  }
  if (done > 0) {
    take(f, 1, PayloadKind::kAmat);
    take(f, 1, PayloadKind::kBmat);
  }

  out.s_hat = ring_symbol_pass(f, dus);
  out.eq = EqualizerResult::from_blocks(collect_W(dus), opts.use_lrd ? "bcd-lrd" : "bcd", done);
  out.sweeps = done;
  return out;
}

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kZf: return "zf";
    case Algorithm::kLmmse: return "lmmse";
    case Algorithm::kBdac: return "bdac";
    case Algorithm::kSdr: return "sdr";
    case Algorithm::kCdr: return "cdr";
    case Algorithm::kBcd: return "bcd";
    case Algorithm::kBcdLrd: return "bcd-lrd";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& s) {
  for (Algorithm a : {Algorithm::kZf, Algorithm::kLmmse, Algorithm::kBdac, Algorithm::kSdr,
                      Algorithm::kCdr, Algorithm::kBcd, Algorithm::kBcdLrd}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("algorithms: unknown algorithm '" + s + "'");
}

TopologyKind topology_for(Algorithm a) {
  return (a == Algorithm::kBcd || a == Algorithm::kBcdLrd) ? TopologyKind::kDaisy
                                                            : TopologyKind::kStar;
}

Rational bandwidth_formula(Algorithm a, const BandwidthParams& p) {
  const std::int64_t M = p.M, K = p.K, C = p.C, N = p.N, T = p.T, r = p.r, n_coh = p.n_coh;
  switch (a) {
    case Algorithm::kLmmse: return Rational(2 * M * (n_coh + K + N), n_coh);
    case Algorithm::kZf: return Rational(2 * M * (n_coh + K), n_coh);
    case Algorithm::kSdr:
    case Algorithm::kCdr: return Rational(2 * C * K * (n_coh + K + N), n_coh);
    case Algorithm::kBdac: return Rational(4 * C * K * K, n_coh) + Rational(2 * C * K);
    case Algorithm::kBcd:
      return Rational(C * (4 * K * K + 2 * N * K) + 2 * T * C * K * (N + K), n_coh) +
             Rational(2 * C * K);
    case Algorithm::kBcdLrd:
      return Rational((C - 1) * M * r + 4 * C * N * r + C * (4 * K * K + 2 * K * r) +
                          2 * T * C * K * (r + K),
                      n_coh) +
             Rational(2 * C * K);
  }
  return Rational();
}

}  // namespace dbpeq
