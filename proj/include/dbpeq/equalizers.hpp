#pragma once

// Centralized and decentralized LMMSE equalizers.
//
// Every decentralized equalizer is split into the kernel that runs on a
// distributed unit (DU) and the kernel that combines DU outputs, so the
// fabric protocols in dbpnet call exactly the same code as the library
// entry points below.
//
// Sample-covariance conventions: "noise" arguments are raw samples
// (M_c x N, R = noise noise^H / N). "Sample factors" Z satisfy R = Z Z^H;
// for raw samples Z = noise / sqrt(N), after low-rank decomposition Z = G.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dbpeq/numerics.hpp"
#include "dbpeq/scenario.hpp"

namespace dbpeq {

struct EqualizerResult {
  CMatrix W;                    // K x M
  std::vector<CMatrix> blocks;  // W_c, K x M_c
  std::string algorithm;
  int iterations = 0;

  static EqualizerResult from_blocks(std::vector<CMatrix> blocks, std::string algorithm,
                                     int iterations = 0);
  static EqualizerResult from_matrix(CMatrix W, const ClusterPartition& p, std::string algorithm,
                                     int iterations = 0);
};

/// noise / sqrt(N).
CMatrix scaled_samples(const CMatrix& noise);

// ---------------------------------------------------------------------------
// Centralized references
// ---------------------------------------------------------------------------

/// (H^H R^{-1} H + I/Es)^{-1} H^H R^{-1} as two HPD solves.
CMatrix lmmse_matrix(const CMatrix& H, const CMatrix& R, double Es);

EqualizerResult lmmse_centralized(const CMatrix& H, const CMatrix& Rhat, double Es);
EqualizerResult zf_centralized(const CMatrix& H);

// ---------------------------------------------------------------------------
// Block-diagonal approximate covariance (BDAC)
// ---------------------------------------------------------------------------

/// DU-side BDAC quantities for one cluster.
struct LocalCompression {
  CMatrix Q;  // H_c^H R_cc^{-1}, K x M_c
  CMatrix P;  // Q H_c, K x K
};

LocalCompression local_compression(const CMatrix& H_c, const CMatrix& R_cc);

/// (S + I/Es)^{-1} for S = sum_c H_c^H R_cc^{-1} H_c.
CMatrix bdac_gain(const CMatrix& S, double Es);

EqualizerResult bdac_mmse(std::span<const CMatrix> H_blocks, std::span<const CMatrix> R_blocks,
                          double Es);

// ---------------------------------------------------------------------------
// Dimensionality reduction (star architecture)
// ---------------------------------------------------------------------------

/// What one DU ships to the CU.
struct CompressedView {
  CMatrix Qy;  // K x n_sym
  CMatrix QH;  // K x K
  CMatrix Qn;  // K x N
};

CompressedView compress_cluster(const CMatrix& Q_c, const CMatrix& H_c, const CMatrix& y_c,
                                const CMatrix& noise_c);

struct DrOutput {
  CMatrix W;      // K x K (superimposed) or K x CK (concatenated)
  CMatrix s_hat;  // K x n_sym
};

/// CU side of sDR: superimpose, estimate the K x K effective covariance,
/// equalize. Throws InsufficientSamples when N < K.
DrOutput sdr_combine(std::span<const CompressedView> views, double Es);

/// CU side of cDR: concatenate, build the CK x CK covariance, equalize.
/// Throws InsufficientSamples when N < CK.
DrOutput cdr_combine(std::span<const CompressedView> views, double Es);

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

struct DrResult {
  DrOutput compressed;
  EqualizerResult effective;  // compressed W folded back onto antennas
};

DrResult sdr_mmse(std::span<const CMatrix> H_blocks, std::span<const CMatrix> y_blocks,
                  std::span<const CMatrix> noise_blocks, double Es);
DrResult cdr_mmse(std::span<const CMatrix> H_blocks, std::span<const CMatrix> y_blocks,
                  std::span<const CMatrix> noise_blocks, double Es);

/// [Q_1, ..., Q_C]
CMatrix superimposed_compression(std::span<const CMatrix> Q_blocks);
/// blkdiag(Q_1, ..., Q_C)
CMatrix concatenated_compression(std::span<const CMatrix> Q_blocks);

/// Error covariance E[(s_hat - s)(s_hat - s)^H] of the LMMSE estimate built
/// from (Q y, Q H, Q R Q^H):
///   Es I - Es (QH)^H (QH (QH)^H + Q R Q^H / Es)^{-1} QH.
CMatrix mse_matrix(const CMatrix& H, const CMatrix& R, const CMatrix& Q, double Es);

// ---------------------------------------------------------------------------
// Block coordinate descent (daisy-chain architecture)
// ---------------------------------------------------------------------------

/// Es ||W H - I||_F^2 + (1/N) sum_i ||W n^i||^2.
double objective_sample(std::span<const CMatrix> W_blocks, std::span<const CMatrix> H_blocks,
                        std::span<const CMatrix> noise_blocks, double Es);
/// Same objective written with sample factors: Es ||W H - I||^2 + ||W Z||^2.
double objective_factored(std::span<const CMatrix> W_blocks, std::span<const CMatrix> H_blocks,
                          std::span<const CMatrix> Z_blocks, double Es);

/// Gradient of objective_sample with respect to W_c, in the convention
/// df = Re tr(G^H dW_c):  2 (Es (W H - I) H_c^H + (1/N) (W n) n_c^H).
CMatrix objective_gradient(int c, std::span<const CMatrix> W_blocks,
                           std::span<const CMatrix> H_blocks,
                           std::span<const CMatrix> noise_blocks, double Es);

/// Per-DU state reused across sweeps: the local Gram
/// Es H_c H_c^H + R_cc is inverted once per realization.
///
/// Without `local_cov`, R_cc = Z_c Z_c^H and the block minimizes the sample
/// objective. With it (the LRD variant), the covariance seen by the blocks is
/// R_cc on the diagonal blocks and G_c G_d^H across clusters, i.e. the
/// truncation residual is kept cluster-locally.
class BcdBlock {
 public:
  BcdBlock(CMatrix H_c, CMatrix Z_c, double Es, const CMatrix* local_cov = nullptr);

  const CMatrix& H() const { return H_; }
  const CMatrix& Z() const { return Z_; }

  /// Minimizer of the objective over W_c given the communication variables
  /// A = sum_j W_j H_j and B = sum_j W_j Z_j (both including the old W_c).
  CMatrix update(const CMatrix& A_prev, const CMatrix& B_prev, const CMatrix& W_prev) const;

  /// A_c = A_prev + (W_new - W_old) H_c and the same for B.
  void advance(CMatrix& A, CMatrix& B, const CMatrix& W_old, const CMatrix& W_new) const;

 private:
  CMatrix H_;
  CMatrix Z_;
  double Es_;
  CMatrix Hh_;
  CMatrix Zh_;
  CMatrix gram_inv_;
  CMatrix residual_;  // R_cc - Z_c Z_c^H, empty when R_cc = Z_c Z_c^H
};

/// Single-block update in raw-sample form: b_prev = sum_j W_j n_j (K x N).
CMatrix bcd_block_update(const CMatrix& H_c, const CMatrix& noise_c, const CMatrix& A_prev,
                         const CMatrix& b_prev, const CMatrix& W_prev, double Es);

enum class BcdInit { kBdac, kZero };

struct BcdOptions {
  /// Fixed sweep count; ignored when tol > 0.
  int sweeps = 4;
  /// Run until the relative change of W over one sweep drops below tol.
  double tol = 0.0;
  int max_sweeps = 100000;
  BcdInit init = BcdInit::kBdac;
  /// Use R_blocks rather than Z Z^H in each block's Gram (see BcdBlock).
  bool local_gram_from_cov = false;
  /// Called after every block update with (sweep, cluster, current blocks).
  std::function<void(int, int, std::span<const CMatrix>)> on_update;
};

/// Initial point and communication variables as produced by the BDAC pass:
/// W_c = Gamma Q_c, A = Gamma S, B = Gamma sum_c Q_c Z_c.
struct BcdStart {
  std::vector<CMatrix> W;
  CMatrix A;
  CMatrix B;
};

BcdStart bcd_start(std::span<const CMatrix> H_blocks, std::span<const CMatrix> R_blocks,
                   std::span<const CMatrix> Z_blocks, double Es, BcdInit init);

/// Gauss-Seidel BCD over the blocks, in cluster order. R_blocks are the
/// local covariances used by the BDAC initializer.
EqualizerResult bcd_mmse(std::span<const CMatrix> H_blocks, std::span<const CMatrix> R_blocks,
                         std::span<const CMatrix> Z_blocks, double Es, const BcdOptions& opts);

/// Sum_c W_c y_c accumulated in cluster order.
CMatrix apply_blocks(std::span<const CMatrix> W_blocks, std::span<const CMatrix> y_blocks);

// ---------------------------------------------------------------------------
// Low-rank decomposition of the noise-sample matrix
// ---------------------------------------------------------------------------

/// Fixed rank when rank > 0; otherwise keep singular values above
/// tau * sigma_1 at every hop.
struct RankRule {
  int rank = 0;
  double tau = 0.05;
};

/// What DU c hands to DU c+1.
struct LrdHop {
  CMatrix D;  // U_c Sigma_c, (rows so far) x r
  CMatrix V;  // N x r
};

/// One relay step: rank-r decomposition of [D V^H ; N_c] (or N_c alone for
/// the first DU). N_c are the DU's scaled samples.
LrdHop lrd_step(const LrdHop* incoming, const CMatrix& N_c, const RankRule& rule);

/// Runs the whole relay on raw noise blocks and returns G_c = N_c V_C.
std::vector<CMatrix> lrd_sequential(std::span<const CMatrix> noise_blocks, const RankRule& rule);

/// Covariance the LRD variant of BCD converges against: G G^H with the
/// diagonal blocks replaced by the exact local covariances R_cc.
CMatrix lrd_covariance(std::span<const CMatrix> G_blocks, std::span<const CMatrix> R_blocks);

/// Count of singular values above tau * sigma_1 (at least 1).
int threshold_rank(const RVector& singular_values, double tau);

}  // namespace dbpeq
