#pragma once

// Dense complex linear algebra used by every equalizer: Hermitian
// positive-definite solves, full/truncated SVD and PSD checks.
//
// Matrices are Eigen column-major complex<double> matrices. All functions
// here are pure; the only shared state is the ridge-retry diagnostic counter.

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dbpeq {

using cdouble = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NotHermitian : public Error {
 public:
  using Error::Error;
};

/// Factorization pivot <= 0 even after the ridge retry.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class RankOutOfRange : public Error {
 public:
  using Error::Error;
};

/// Relative asymmetry tolerated by hpd_solve / HpdFactor.
inline constexpr double kHermitianTol = 1e-10;
/// Ridge scale: A + eps * tr(A)/n * I on factorization failure.
inline constexpr double kRidgeEps = 1e-12;

/// Cholesky factor of a Hermitian positive-definite matrix.
///
/// Construction checks Hermitian symmetry and factorizes; if the
/// factorization fails it retries once with a trace-scaled ridge and bumps
/// the global ridge counter. Throws NotHermitian / NotPositiveDefinite.
class HpdFactor {
 public:
  explicit HpdFactor(const CMatrix& a);

  /// Solves A X = B.
  CMatrix solve(const CMatrix& b) const;
  /// A^{-1}; only for tests and tiny K x K gains.
  CMatrix inverse() const;

  Eigen::Index size() const { return n_; }
  bool ridged() const { return ridged_; }

 private:
  Eigen::Index n_ = 0;
  bool ridged_ = false;
  Eigen::LLT<CMatrix> llt_;
};

CMatrix hpd_solve(const CMatrix& a, const CMatrix& b);

/// Number of ridge retries performed process-wide (thread-safe).
std::uint64_t ridge_retry_count();

struct SvdResult {
  CMatrix U;
  RVector S;  // non-increasing
  CMatrix V;
};

/// Thin SVD: U is m x p, V is n x p with p = min(m, n).
SvdResult svd(const CMatrix& x);

/// The r dominant singular triplets. Throws RankOutOfRange unless
/// 1 <= r <= min(m, n).
SvdResult truncated_svd(const CMatrix& x, Eigen::Index r);

/// U * diag(S) * V^H.
CMatrix reconstruct(const SvdResult& s);

CMatrix hermitize(const CMatrix& a);
double frob_norm(const CMatrix& a);
CMatrix matmul(const CMatrix& a, const CMatrix& b);
CMatrix add(const CMatrix& a, const CMatrix& b);
CMatrix scale(const CMatrix& a, cdouble s);
CMatrix conj_transpose(const CMatrix& a);

CMatrix identity(Eigen::Index n);
CMatrix blkdiag(const std::vector<CMatrix>& blocks);
CMatrix vstack(const std::vector<CMatrix>& blocks);
CMatrix hstack(const std::vector<CMatrix>& blocks);

/// ||A - A^H||_F <= tol * max(1, ||A||_F).
bool is_hermitian(const CMatrix& a, double tol = kHermitianTol);
/// Eigenvalues of hermitize(a), ascending.
RVector hermitian_eigenvalues(const CMatrix& a);
double min_eigenvalue(const CMatrix& a);
/// Smallest eigenvalue >= -rel_tol * |trace|.
bool is_psd(const CMatrix& a, double rel_tol = 1e-12);

}  // namespace dbpeq
