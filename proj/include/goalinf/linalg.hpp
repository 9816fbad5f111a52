#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "goalinf/errors.hpp"

namespace goalinf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionMismatch(what);
}

}  // namespace detail

/// Symmetrizes M as (M + M^T)/2. Relative asymmetry beyond `tol` is an
/// error: it usually means the caller built the wrong operator product.
inline Matrix symmetrize(const Matrix& m, double tol = 1e-8) {
  detail::require(m.rows() == m.cols(), "symmetrize: matrix must be square");
  const double scale = m.norm();
  const double skew = (m - m.transpose()).norm();
  if (scale > 0 && skew > tol * scale) {
    throw DimensionMismatch("symmetrize: matrix is not symmetric (relative asymmetry " +
                            std::to_string(skew / scale) + ")");
  }
  return 0.5 * (m + m.transpose());
}

/// Dense symmetric positive definite matrix with a lazily cached lower
/// Cholesky factor. Immutable after construction; the cache is filled
/// under a once-only contract and shared between copies.
class SpdMatrix {
 public:
  SpdMatrix() : cache_(std::make_shared<Cache>()) {}

  explicit SpdMatrix(Matrix m)
      : mat_(symmetrize(std::move(m))), cache_(std::make_shared<Cache>()) {}

  static SpdMatrix identity(Index n) { return SpdMatrix(Matrix::Identity(n, n)); }

  const Matrix& dense() const { return mat_; }
  Index dim() const { return mat_.rows(); }

  /// Lower Cholesky factor L with L L^T = dense().
  /// Throws NotPositiveDefinite on the first call that factors the matrix.
  const Matrix& chol_lower() const {
    std::call_once(cache_->flag, [this] {
      Eigen::LLT<Matrix> llt(mat_);
      if (llt.info() != Eigen::Success || (llt.matrixLLT().diagonal().array() <= 0.0).any()) {
        cache_->ok = false;
        return;
      }
      cache_->lower = llt.matrixL();
      cache_->ok = true;
    });
    if (!cache_->ok) throw NotPositiveDefinite("Cholesky factorization failed: matrix is not SPD");
    return cache_->lower;
  }

  /// Solves A x = b through the Cholesky factor.
  Matrix solve(const Matrix& b) const {
    detail::require(b.rows() == dim(), "SpdMatrix::solve: dimension mismatch");
    const Matrix& l = chol_lower();
    Matrix x = l.triangularView<Eigen::Lower>().solve(b);
    l.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
    return x;
  }

  Vector solve(const Vector& b) const { return Vector(solve(Matrix(b))); }

  /// log det(A), via the Cholesky factor.
  double log_det() const { return 2.0 * chol_lower().diagonal().array().log().sum(); }

 private:
  Matrix mat_;
  struct Cache {
    std::once_flag flag;
    Matrix lower;
    bool ok = false;
  };
  std::shared_ptr<Cache> cache_;
};

/// Lower Cholesky factor of an SPD matrix.
inline Matrix chol(const SpdMatrix& m) { return m.chol_lower(); }

/// Generalized eigenpairs of a symmetric pencil.
struct EigPairs {
  enum class Normalization { BOrthonormal, ANormalized };
  Vector values;     ///< sorted descending
  Matrix vectors;    ///< column i pairs with values[i]
  Normalization normalization = Normalization::BOrthonormal;
};

/// All eigenpairs of A v = sigma B v for symmetric A and SPD B, sorted
/// descending, with B-orthonormal eigenvectors. Computed by the dense
/// reduction B = L L^T, symmetric eigendecomposition of L^-1 A L^-T,
/// and the back-map v = L^-T u.
inline EigPairs generalized_eigh(const Matrix& a, const SpdMatrix& b) {
  detail::require(a.rows() == a.cols() && a.rows() == b.dim(),
                  "generalized_eigh: dimension mismatch");
  const Matrix a_sym = symmetrize(a);
  const Matrix& l = b.chol_lower();
  Matrix reduced = l.triangularView<Eigen::Lower>().solve(a_sym);
  reduced = l.triangularView<Eigen::Lower>().solve(Matrix(reduced.transpose()));
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(reduced, 1e-6));
  if (es.info() != Eigen::Success) throw Error("generalized_eigh: eigensolver failed");

  const Index n = a.rows();
  EigPairs out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  // Eigen returns ascending order; reverse for descending. Stable within
  // degenerate clusters by construction (plain index reversal).
  Matrix back = l.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors());
  for (Index i = 0; i < n; ++i) {
    out.values[i] = es.eigenvalues()[n - 1 - i];
    out.vectors.col(i) = back.col(n - 1 - i);
  }
  return out;
}

/// Orthogonal projector onto the range of a full-column-rank matrix,
/// applied through a least-squares solve (QR). Reusable across many
/// right-hand sides.
class RangeProjector {
 public:
  explicit RangeProjector(Matrix mt) : mt_(std::move(mt)), qr_(mt_) {
    const Index p = mt_.cols();
    detail::require(mt_.rows() >= p, "RangeProjector: need rows >= cols");
    const auto rdiag = qr_.matrixR().diagonal().head(p).array().abs();
    if (p > 0 && rdiag.minCoeff() < 1e-12 * rdiag.maxCoeff()) {
      throw RankDeficient("RangeProjector: columns are numerically rank deficient");
    }
  }

  /// Pi v = Mt x_ls with x_ls the least-squares solution of Mt x = v.
  Vector apply(const Vector& v) const {
    detail::require(v.size() == mt_.rows(), "RangeProjector::apply: dimension mismatch");
    return mt_ * qr_.solve(v);
  }

  /// Columnwise projection.
  Matrix apply_matrix(const Matrix& m) const {
    detail::require(m.rows() == mt_.rows(), "RangeProjector::apply_matrix: dimension mismatch");
    return mt_ * qr_.solve(m);
  }

  const Matrix& basis() const { return mt_; }

 private:
  Matrix mt_;
  Eigen::ColPivHouseholderQR<Matrix> qr_;
};

/// One-shot projection of v onto range(mt).
inline Vector range_projector_apply(const Matrix& mt, const Vector& v) {
  return RangeProjector(mt).apply(v);
}

/// Schur complements of an SPD matrix partitioned after `split` rows:
/// S(A) = C - B^T A^-1 B and S(C) = A - B C^-1 B^T.
inline std::pair<SpdMatrix, SpdMatrix> schur_complements(const SpdMatrix& sigma, Index split) {
  const Index n = sigma.dim();
  detail::require(split > 0 && split < n, "schur_complements: split out of range");
  const Matrix& s = sigma.dense();
  const Matrix a = s.topLeftCorner(split, split);
  const Matrix b = s.topRightCorner(split, n - split);
  const Matrix c = s.bottomRightCorner(n - split, n - split);
  const SpdMatrix a_spd(a);
  const SpdMatrix c_spd(c);
  SpdMatrix s_of_a(Matrix(c - b.transpose() * a_spd.solve(b)));
  SpdMatrix s_of_c(Matrix(a - b * c_spd.solve(Matrix(b.transpose()))));
  return {std::move(s_of_a), std::move(s_of_c)};
}

}  // namespace goalinf
