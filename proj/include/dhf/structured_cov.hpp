#pragma once

#include <memory>
#include <vector>

#include "dhf/factor_cov.hpp"
#include "dhf/types.hpp"

namespace dhf {

/// Dense covariance block over an explicit index set.
struct CovBlock {
  std::vector<Index> index;
  Matrix cov;
};

/// Covariance of the form L S L' + A, where A is block diagonal: a diagonal
/// part plus dense blocks on disjoint index sets (block entries replace the
/// diagonal there). Used for reconciled and baseline covariances whose
/// residual part is no longer diagonal but stays local.
class StructuredCovariance {
 public:
  StructuredCovariance() = default;
  StructuredCovariance(Matrix loadings, Matrix factor_cov, Vector diag,
                       std::vector<CovBlock> blocks = {});

  static StructuredCovariance from_factor(const GaussianFactorMoments& fc);
  static StructuredCovariance from_dense(const Matrix& cov);

  Index size() const { return diag_.size(); }
  const Matrix& loadings() const { return loadings_; }
  const Matrix& factor_cov() const { return factor_cov_; }
  const Vector& diag() const { return diag_; }
  const std::vector<CovBlock>& blocks() const { return blocks_; }

  double variance(Index i) const;
  Vector variances() const;
  Vector cov_vec(const Eigen::Ref<const Vector>& c) const;
  double quad_form(const Eigen::Ref<const Vector>& c) const;

  /// Solve and log-determinant. Each block must be positive definite and
  /// each diagonal entry positive, else NumericalError.
  Matrix solve(const Eigen::Ref<const Matrix>& rhs) const;
  double logdet() const;

  Matrix dense(Index cap = kDefaultDenseCap) const;

  /// Covariance of R x for a sparse R (m x size). The residual part becomes
  /// block diagonal over connected components of rows sharing support.
  /// Throws NumericalError when a component would exceed `cap` base series.
  StructuredCovariance transform(const SparseRowMatrix& r, Index cap = kDefaultDenseCap) const;

 private:
  struct Factorization {
    std::vector<Eigen::LLT<Matrix>> block_llt;
    Matrix b;          // low-rank factor L V sqrt(lam)
    Matrix a_inv_b;    // A^{-1} b
    Eigen::LLT<Matrix> cap;
    double logdet = 0.0;
  };
  const Factorization& factorization() const;
  Matrix solve_residual(const Eigen::Ref<const Matrix>& rhs) const;
  void index_blocks();

  Matrix loadings_;
  Matrix factor_cov_;
  Vector diag_;
  std::vector<CovBlock> blocks_;
  std::vector<Index> block_of_;  // -1 when diagonal
  mutable std::shared_ptr<Factorization> fact_;
};

}  // namespace dhf
