#include "dbpeq/equalizers.hpp"

#include <algorithm>
#include <cmath>

namespace dbpeq {

namespace {

void require_same_count(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeMismatch(std::string(what) + ": per-cluster input counts differ");
}

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw ShapeMismatch(std::string(what) + ": no clusters");
}

CMatrix accumulate_products(std::span<const CMatrix> left, std::span<const CMatrix> right) {
  CMatrix acc = left[0] * right[0];
  for (std::size_t c = 1; c < left.size(); ++c) acc += left[c] * right[c];
  return acc;
}

std::vector<CMatrix> scaled_blocks(std::span<const CMatrix> noise_blocks) {
  std::vector<CMatrix> out;
  out.reserve(noise_blocks.size());
  for (const auto& n : noise_blocks) out.push_back(scaled_samples(n));
  return out;
}

}  // namespace

EqualizerResult EqualizerResult::from_blocks(std::vector<CMatrix> blocks, std::string algorithm,
                                             int iterations) {
  EqualizerResult r;
  r.W = hstack(blocks);
  r.blocks = std::move(blocks);
  r.algorithm = std::move(algorithm);
  r.iterations = iterations;
  return r;
}

EqualizerResult EqualizerResult::from_matrix(CMatrix W, const ClusterPartition& p,
                                             std::string algorithm, int iterations) {
  if (W.cols() != p.total()) throw ShapeMismatch("EqualizerResult: W columns != partition size");
  EqualizerResult r;
  for (int c = 0; c < p.count(); ++c) r.blocks.push_back(W.middleCols(p.offsets[c], p.sizes[c]));
  r.W = std::move(W);
  r.algorithm = std::move(algorithm);
  r.iterations = iterations;
  return r;
}

CMatrix scaled_samples(const CMatrix& noise) {
  return noise / std::sqrt(static_cast<double>(noise.cols()));
}

CMatrix lmmse_matrix(const CMatrix& H, const CMatrix& R, double Es) {
  if (R.rows() != H.rows()) throw ShapeMismatch("lmmse: covariance does not match channel rows");
  const CMatrix RiH = HpdFactor(R).solve(H);
  CMatrix gram = H.adjoint() * RiH;
  gram.diagonal().array() += 1.0 / Es;
  return HpdFactor(hermitize(gram)).solve(RiH.adjoint());
}

EqualizerResult lmmse_centralized(const CMatrix& H, const CMatrix& Rhat, double Es) {
  return EqualizerResult::from_blocks({lmmse_matrix(H, Rhat, Es)}, "lmmse");
}

EqualizerResult zf_centralized(const CMatrix& H) {
  const HpdFactor gram(hermitize(H.adjoint() * H));
  // A ridge would hide a rank-deficient channel; ZF has no noise term to absorb it.
  if (gram.ridged()) throw NotPositiveDefinite("zf: channel is rank deficient");
  return EqualizerResult::from_blocks({gram.solve(H.adjoint())}, "zf");
}

LocalCompression local_compression(const CMatrix& H_c, const CMatrix& R_cc) {
  LocalCompression lc;
  lc.Q = HpdFactor(R_cc).solve(H_c).adjoint();
  lc.P = lc.Q * H_c;
  return lc;
}

CMatrix bdac_gain(const CMatrix& S, double Es) {
  CMatrix g = hermitize(S);
  g.diagonal().array() += 1.0 / Es;
  return HpdFactor(g).inverse();
}

EqualizerResult bdac_mmse(std::span<const CMatrix> H_blocks, std::span<const CMatrix> R_blocks,
                          double Es) {
  require_nonempty(H_blocks.size(), "bdac_mmse");
  require_same_count(H_blocks.size(), R_blocks.size(), "bdac_mmse");
  std::vector<LocalCompression> local;
  for (std::size_t c = 0; c < H_blocks.size(); ++c) {
    local.push_back(local_compression(H_blocks[c], R_blocks[c]));
  }
  CMatrix S = local[0].P;
  for (std::size_t c = 1; c < local.size(); ++c) S += local[c].P;
  const CMatrix gamma = bdac_gain(S, Es);
  std::vector<CMatrix> blocks;
  for (const auto& lc : local) blocks.push_back(gamma * lc.Q);
  return EqualizerResult::from_blocks(std::move(blocks), "bdac");
}

CompressedView compress_cluster(const CMatrix& Q_c, const CMatrix& H_c, const CMatrix& y_c,
                                const CMatrix& noise_c) {
  return CompressedView{Q_c * y_c, Q_c * H_c, Q_c * noise_c};
}

DrOutput sdr_combine(std::span<const CompressedView> views, double Es) {
  require_nonempty(views.size(), "sdr_combine");
  const auto K = views[0].QH.rows();
  const auto N = views[0].Qn.cols();
  if (N < K) {
    throw InsufficientSamples("sDR: " + std::to_string(N) + " noise samples cannot estimate a " +
                              std::to_string(K) + "x" + std::to_string(K) + " covariance");
  }
  CMatrix y = views[0].Qy;
  CMatrix h = views[0].QH;
  CMatrix n = views[0].Qn;
  for (std::size_t c = 1; c < views.size(); ++c) {
    y += views[c].Qy;
    h += views[c].QH;
    n += views[c].Qn;
  }
  DrOutput out;
  out.W = lmmse_matrix(h, sample_covariance(n), Es);
  out.s_hat = out.W * y;
  return out;
}

DrOutput cdr_combine(std::span<const CompressedView> views, double Es) {
  require_nonempty(views.size(), "cdr_combine");
  const auto K = views[0].QH.rows();
  const auto N = views[0].Qn.cols();
  const auto CK = K * static_cast<Eigen::Index>(views.size());
  if (N < CK) {
    throw InsufficientSamples("cDR: " + std::to_string(N) + " noise samples < C*K = " +
                              std::to_string(CK) + "; concatenated covariance is rank deficient");
  }
  std::vector<CMatrix> ys, hs, ns;
  for (const auto& v : views) {
    ys.push_back(v.Qy);
    hs.push_back(v.QH);
    ns.push_back(v.Qn);
  }
  DrOutput out;
  out.W = lmmse_matrix(vstack(hs), sample_covariance(vstack(ns)), Es);
  out.s_hat = out.W * vstack(ys);
  return out;
}

namespace {

template <typename Combine>
DrResult dr_mmse(std::span<const CMatrix> H_blocks, std::span<const CMatrix> y_blocks,
                 std::span<const CMatrix> noise_blocks, double Es, const char* tag,
                 Combine combine, bool concatenated) {
  require_nonempty(H_blocks.size(), tag);
  require_same_count(H_blocks.size(), y_blocks.size(), tag);
  require_same_count(H_blocks.size(), noise_blocks.size(), tag);
  std::vector<CMatrix> qs;
  std::vector<CompressedView> views;
  for (std::size_t c = 0; c < H_blocks.size(); ++c) {
    const CMatrix Q = local_compression(H_blocks[c], sample_covariance(noise_blocks[c])).Q;
    views.push_back(compress_cluster(Q, H_blocks[c], y_blocks[c], noise_blocks[c]));
    qs.push_back(Q);
  }
  DrResult r;
  r.compressed = combine(views, Es);
  std::vector<CMatrix> blocks;
  const auto K = H_blocks[0].cols();
  for (std::size_t c = 0; c < qs.size(); ++c) {
    if (concatenated) {
      blocks.push_back(r.compressed.W.middleCols(static_cast<Eigen::Index>(c) * K, K) * qs[c]);
    } else {
      blocks.push_back(r.compressed.W * qs[c]);
    }
  }
  r.effective = EqualizerResult::from_blocks(std::move(blocks), tag);
  return r;
}

}  // namespace

DrResult sdr_mmse(std::span<const CMatrix> H_blocks, std::span<const CMatrix> y_blocks,
                  std::span<const CMatrix> noise_blocks, double Es) {
  return dr_mmse(H_blocks, y_blocks, noise_blocks, Es, "sdr", sdr_combine, false);
}

DrResult cdr_mmse(std::span<const CMatrix> H_blocks, std::span<const CMatrix> y_blocks,
                  std::span<const CMatrix> noise_blocks, double Es) {
  return dr_mmse(H_blocks, y_blocks, noise_blocks, Es, "cdr", cdr_combine, true);
}

CMatrix superimposed_compression(std::span<const CMatrix> Q_blocks) {
  return hstack(std::vector<CMatrix>(Q_blocks.begin(), Q_blocks.end()));
}

CMatrix concatenated_compression(std::span<const CMatrix> Q_blocks) {
  return blkdiag(std::vector<CMatrix>(Q_blocks.begin(), Q_blocks.end()));
}

CMatrix mse_matrix(const CMatrix& H, const CMatrix& R, const CMatrix& Q, double Es) {
  const CMatrix QH = matmul(Q, H);
  const CMatrix inner = hermitize(QH * QH.adjoint() + Q * R * Q.adjoint() / Es);
  CMatrix E = -Es * (QH.adjoint() * HpdFactor(inner).solve(QH));
  E.diagonal().array() += Es;
  return hermitize(E);
}

double objective_factored(std::span<const CMatrix> W_blocks, std::span<const CMatrix> H_blocks,
                          std::span<const CMatrix> Z_blocks, double Es) {
  require_nonempty(W_blocks.size(), "objective");
  require_same_count(W_blocks.size(), H_blocks.size(), "objective");
  require_same_count(W_blocks.size(), Z_blocks.size(), "objective");
  CMatrix WH = accumulate_products(W_blocks, H_blocks);
  const CMatrix WZ = accumulate_products(W_blocks, Z_blocks);
  WH.diagonal().array() -= 1.0;
  return Es * WH.squaredNorm() + WZ.squaredNorm();
}

double objective_sample(std::span<const CMatrix> W_blocks, std::span<const CMatrix> H_blocks,
                        std::span<const CMatrix> noise_blocks, double Es) {
  const auto Z = scaled_blocks(noise_blocks);
  return objective_factored(W_blocks, H_blocks, Z, Es);
}

CMatrix objective_gradient(int c, std::span<const CMatrix> W_blocks,
                           std::span<const CMatrix> H_blocks,
                           std::span<const CMatrix> noise_blocks, double Es) {
  require_same_count(W_blocks.size(), H_blocks.size(), "objective_gradient");
  require_same_count(W_blocks.size(), noise_blocks.size(), "objective_gradient");
  const auto idx = static_cast<std::size_t>(c);
  CMatrix WH = accumulate_products(W_blocks, H_blocks);
  WH.diagonal().array() -= 1.0;
  const CMatrix Wn = accumulate_products(W_blocks, noise_blocks);
  const double inv_n = 1.0 / static_cast<double>(noise_blocks[idx].cols());
  return 2.0 * (Es * WH * H_blocks[idx].adjoint() + inv_n * Wn * noise_blocks[idx].adjoint());
}

BcdBlock::BcdBlock(CMatrix H_c, CMatrix Z_c, double Es, const CMatrix* local_cov)
    : H_(std::move(H_c)), Z_(std::move(Z_c)), Es_(Es) {
  if (H_.rows() != Z_.rows()) throw ShapeMismatch("BcdBlock: H and Z row counts differ");
  CMatrix cov = hermitize(Z_ * Z_.adjoint());
  if (local_cov) {
    if (local_cov->rows() != H_.rows() || local_cov->cols() != H_.rows()) {
      throw ShapeMismatch("BcdBlock: local covariance does not match H rows");
    }
    residual_ = *local_cov - cov;
    cov = hermitize(*local_cov);
  }
  CMatrix gram = Es_ * H_ * H_.adjoint() + cov;
  gram_inv_ = HpdFactor(hermitize(gram)).inverse();
  Hh_ = H_.adjoint();
  Zh_ = Z_.adjoint();
}

// The minimizer is numerator * gram^{-1} with
//   numerator = Es (I - A + W H) H^H - (B - W Z) Z^H
//             = Es (I - A) H^H - B Z^H - W residual + W gram,
// so W_new = W + (Es (I - A) H^H - B Z^H - W residual) gram^{-1}.
CMatrix BcdBlock::update(const CMatrix& A_prev, const CMatrix& B_prev,
                         const CMatrix& W_prev) const {
  CMatrix lead = -A_prev;
  lead.diagonal().array() += 1.0;
  CMatrix step = Es_ * lead.lazyProduct(Hh_);
  step.noalias() -= B_prev.lazyProduct(Zh_);
  if (residual_.size() > 0) step.noalias() -= W_prev.lazyProduct(residual_);
  CMatrix W = W_prev;
  W.noalias() += step.lazyProduct(gram_inv_);
  return W;
}

void BcdBlock::advance(CMatrix& A, CMatrix& B, const CMatrix& W_old, const CMatrix& W_new) const {
  const CMatrix delta = W_new - W_old;
  A.noalias() += delta.lazyProduct(H_);
  B.noalias() += delta.lazyProduct(Z_);
}

CMatrix bcd_block_update(const CMatrix& H_c, const CMatrix& noise_c, const CMatrix& A_prev,
                         const CMatrix& b_prev, const CMatrix& W_prev, double Es) {
  const double root_n = std::sqrt(static_cast<double>(noise_c.cols()));
  const BcdBlock block(H_c, noise_c / root_n, Es);
  return block.update(A_prev, b_prev / root_n, W_prev);
}

BcdStart bcd_start(std::span<const CMatrix> H_blocks, std::span<const CMatrix> R_blocks,
                   std::span<const CMatrix> Z_blocks, double Es, BcdInit init) {
  require_nonempty(H_blocks.size(), "bcd_start");
  require_same_count(H_blocks.size(), Z_blocks.size(), "bcd_start");
  const auto K = H_blocks[0].cols();
  BcdStart st;
  if (init == BcdInit::kZero) {
    for (const auto& h : H_blocks) st.W.push_back(CMatrix::Zero(K, h.rows()));
    st.A = CMatrix::Zero(K, K);
    st.B = CMatrix::Zero(K, Z_blocks[0].cols());
    return st;
  }
  require_same_count(H_blocks.size(), R_blocks.size(), "bcd_start");
  std::vector<LocalCompression> local;
  for (std::size_t c = 0; c < H_blocks.size(); ++c) {
    local.push_back(local_compression(H_blocks[c], R_blocks[c]));
  }
  CMatrix S = local[0].P;
  CMatrix T = local[0].Q * Z_blocks[0];
  for (std::size_t c = 1; c < local.size(); ++c) {
    S += local[c].P;
    T += local[c].Q * Z_blocks[c];
  }
  const CMatrix gamma = bdac_gain(S, Es);
  for (const auto& lc : local) st.W.push_back(gamma * lc.Q);
  st.A = gamma * S;
  st.B = gamma * T;
  return st;
}

EqualizerResult bcd_mmse(std::span<const CMatrix> H_blocks, std::span<const CMatrix> R_blocks,
                         std::span<const CMatrix> Z_blocks, double Es, const BcdOptions& opts) {
  BcdStart st = bcd_start(H_blocks, R_blocks, Z_blocks, Es, opts.init);
  std::vector<BcdBlock> blocks;
  if (opts.local_gram_from_cov) require_same_count(H_blocks.size(), R_blocks.size(), "bcd_mmse");
  for (std::size_t c = 0; c < H_blocks.size(); ++c) {
    blocks.emplace_back(H_blocks[c], Z_blocks[c], Es,
                        opts.local_gram_from_cov ? &R_blocks[c] : nullptr);
  }

  const bool to_tolerance = opts.tol > 0.0;
  const int budget = to_tolerance ? opts.max_sweeps : opts.sweeps;
  int done = 0;
  for (int sweep = 1; sweep <= budget; ++sweep) {
    double change = 0.0;
    double norm = 0.0;
    for (std::size_t c = 0; c < blocks.size(); ++c) {
      CMatrix W_new = blocks[c].update(st.A, st.B, st.W[c]);
      blocks[c].advance(st.A, st.B, st.W[c], W_new);
      change += (W_new - st.W[c]).squaredNorm();
      norm += W_new.squaredNorm();
      st.W[c] = std::move(W_new);
      if (opts.on_update) opts.on_update(sweep, static_cast<int>(c), st.W);
    }
    done = sweep;
    if (to_tolerance && std::sqrt(change) <= opts.tol * std::sqrt(norm)) break;
  }
  return EqualizerResult::from_blocks(std::move(st.W), "bcd", done);
}

CMatrix apply_blocks(std::span<const CMatrix> W_blocks, std::span<const CMatrix> y_blocks) {
  require_nonempty(W_blocks.size(), "apply_blocks");
  require_same_count(W_blocks.size(), y_blocks.size(), "apply_blocks");
  return accumulate_products(W_blocks, y_blocks);
}

int threshold_rank(const RVector& singular_values, double tau) {
  if (singular_values.size() == 0) return 0;
  const double cut = tau * singular_values(0);
  int r = 0;
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    if (singular_values(i) > cut) ++r;
  }
  return std::max(r, 1);
}

LrdHop lrd_step(const LrdHop* incoming, const CMatrix& N_c, const RankRule& rule) {
  CMatrix stacked = incoming ? vstack({incoming->D * incoming->V.adjoint(), N_c}) : N_c;
  const Eigen::Index cap = std::min(stacked.rows(), stacked.cols());
  if (rule.rank > 0 && rule.rank > stacked.cols()) {
    throw RankOutOfRange("lrd: rank " + std::to_string(rule.rank) + " exceeds sample count " +
                         std::to_string(stacked.cols()));
  }
  const SvdResult full = svd(stacked);
  const Eigen::Index r = rule.rank > 0 ? std::min<Eigen::Index>(rule.rank, cap)
                                       : threshold_rank(full.S, rule.tau);
  LrdHop hop;
  hop.D = full.U.leftCols(r) * full.S.head(r).cast<cdouble>().asDiagonal();
  hop.V = full.V.leftCols(r);
  return hop;
}

std::vector<CMatrix> lrd_sequential(std::span<const CMatrix> noise_blocks, const RankRule& rule) {
  require_nonempty(noise_blocks.size(), "lrd_sequential");
  const auto scaled = scaled_blocks(noise_blocks);
  Eigen::Index total_rows = 0;
  for (const auto& n : scaled) total_rows += n.rows();
  if (rule.rank > std::min(total_rows, scaled[0].cols())) {
    throw RankOutOfRange("lrd: rank " + std::to_string(rule.rank) + " exceeds min(M, N)");
  }
  LrdHop hop = lrd_step(nullptr, scaled[0], rule);
  for (std::size_t c = 1; c < scaled.size(); ++c) hop = lrd_step(&hop, scaled[c], rule);
  std::vector<CMatrix> G;
  for (const auto& n : scaled) G.push_back(n * hop.V);
  return G;
}

CMatrix lrd_covariance(std::span<const CMatrix> G_blocks, std::span<const CMatrix> R_blocks) {
  require_nonempty(G_blocks.size(), "lrd_covariance");
  require_same_count(G_blocks.size(), R_blocks.size(), "lrd_covariance");
  const CMatrix G = vstack(std::vector<CMatrix>(G_blocks.begin(), G_blocks.end()));
  CMatrix R = G * G.adjoint();
  Eigen::Index offset = 0;
  for (const auto& r : R_blocks) {
    R.block(offset, offset, r.rows(), r.cols()) = r;
    offset += r.rows();
  }
  return hermitize(R);
}

}  // namespace dbpeq
