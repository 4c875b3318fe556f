#include "dbpeq/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace dbpeq {

namespace {

std::atomic<std::uint64_t> g_ridge_retries{0};

std::string shape(const CMatrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

// First entry with magnitude above this is the phase reference of a singular
// vector.
constexpr double kPhaseRefTol = 1e-14;

void normalize_phases(SvdResult& s) {
  for (Eigen::Index k = 0; k < s.U.cols(); ++k) {
    auto u = s.U.col(k);
    const double scale_ref = u.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double mag = std::abs(u(i));
      if (mag > kPhaseRefTol * std::max(1.0, scale_ref)) {
        const cdouble rot = std::conj(u(i)) / mag;
        s.U.col(k) *= rot;
        s.V.col(k) *= rot;
        break;
      }
    }
  }
}

}  // namespace

HpdFactor::HpdFactor(const CMatrix& a) : n_(a.rows()) {
  if (a.rows() != a.cols()) {
    throw ShapeMismatch("hpd: matrix must be square, got " + shape(a));
  }
  if (!is_hermitian(a)) {
    throw NotHermitian("hpd: matrix is not Hermitian within tolerance");
  }
  const CMatrix h = hermitize(a);
  llt_.compute(h);
  if (llt_.info() != Eigen::Success) {
    const double tr = h.trace().real();
    const double ridge = kRidgeEps * std::abs(tr) / static_cast<double>(std::max<Eigen::Index>(n_, 1));
    CMatrix shifted = h;
    shifted.diagonal().array() += ridge;
    llt_.compute(shifted);
    ridged_ = true;
    g_ridge_retries.fetch_add(1, std::memory_order_relaxed);
    if (llt_.info() != Eigen::Success || ridge == 0.0) {
      throw NotPositiveDefinite("hpd: factorization failed after ridge retry (n=" +
                                std::to_string(n_) + ")");
    }
  }
}

CMatrix HpdFactor::solve(const CMatrix& b) const {
  if (b.rows() != n_) {
    throw ShapeMismatch("hpd_solve: rhs has " + std::to_string(b.rows()) + " rows, expected " +
                        std::to_string(n_));
  }
  return llt_.solve(b);
}

CMatrix HpdFactor::inverse() const { return llt_.solve(CMatrix::Identity(n_, n_)); }

CMatrix hpd_solve(const CMatrix& a, const CMatrix& b) { return HpdFactor(a).solve(b); }

std::uint64_t ridge_retry_count() { return g_ridge_retries.load(std::memory_order_relaxed); }

SvdResult svd(const CMatrix& x) {
  Eigen::JacobiSVD<CMatrix> dec(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdResult out{dec.matrixU(), dec.singularValues(), dec.matrixV()};
  normalize_phases(out);
  return out;
}

SvdResult truncated_svd(const CMatrix& x, Eigen::Index r) {
  const Eigen::Index p = std::min(x.rows(), x.cols());
  if (r < 1 || r > p) {
    throw RankOutOfRange("truncated_svd: rank " + std::to_string(r) + " outside [1, " +
                         std::to_string(p) + "]");
  }
  SvdResult full = svd(x);
  return SvdResult{full.U.leftCols(r), full.S.head(r), full.V.leftCols(r)};
}

CMatrix reconstruct(const SvdResult& s) {
  return s.U * s.S.cast<cdouble>().asDiagonal() * s.V.adjoint();
}

CMatrix hermitize(const CMatrix& a) {
  if (a.rows() != a.cols()) throw ShapeMismatch("hermitize: non-square " + shape(a));
  return (a + a.adjoint()) * 0.5;
}

double frob_norm(const CMatrix& a) { return a.norm(); }

CMatrix matmul(const CMatrix& a, const CMatrix& b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: " + shape(a) + " * " + shape(b));
  return a * b;
}

CMatrix add(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch("add: " + shape(a) + " + " + shape(b));
  }
  return a + b;
}

CMatrix scale(const CMatrix& a, cdouble s) { return a * s; }

CMatrix conj_transpose(const CMatrix& a) { return a.adjoint(); }

CMatrix identity(Eigen::Index n) { return CMatrix::Identity(n, n); }

CMatrix blkdiag(const std::vector<CMatrix>& blocks) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  CMatrix out = CMatrix::Zero(rows, cols);
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

CMatrix vstack(const std::vector<CMatrix>& blocks) {
  if (blocks.empty()) return CMatrix();
  const Eigen::Index cols = blocks.front().cols();
  Eigen::Index rows = 0;
  for (const auto& b : blocks) {
    if (b.cols() != cols) throw ShapeMismatch("vstack: column count mismatch");
    rows += b.rows();
  }
  CMatrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& b : blocks) {
    out.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  return out;
}

CMatrix hstack(const std::vector<CMatrix>& blocks) {
  if (blocks.empty()) return CMatrix();
  const Eigen::Index rows = blocks.front().rows();
  Eigen::Index cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) throw ShapeMismatch("hstack: row count mismatch");
    cols += b.cols();
  }
  CMatrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& b : blocks) {
    out.middleCols(c, b.cols()) = b;
    c += b.cols();
  }
  return out;
}

bool is_hermitian(const CMatrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  return (a - a.adjoint()).norm() <= tol * std::max(1.0, a.norm());
}

RVector hermitian_eigenvalues(const CMatrix& a) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double min_eigenvalue(const CMatrix& a) { return hermitian_eigenvalues(a).minCoeff(); }

bool is_psd(const CMatrix& a, double rel_tol) {
  const double tr = std::abs(a.trace().real());
  return min_eigenvalue(a) >= -rel_tol * tr;
}

}  // namespace dbpeq
