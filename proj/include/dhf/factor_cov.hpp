#pragma once

#include <span>

#include "dhf/hierarchy.hpp"
#include "dhf/types.hpp"

namespace dhf {

/// Default cap on the size of any matrix we agree to densify.
inline constexpr Index kDefaultDenseCap = 2000;

/// Mean plus covariance in factor form: Q = L S L' + diag(D), with L the
/// n_b x n_x loadings, S the n_x x n_x factor covariance and D >= 0.
struct GaussianFactorMoments {
  Vector mean;
  Matrix loadings;
  Matrix factor_cov;
  Vector specific;

  Index n_base() const { return mean.size(); }
  Index n_factors() const { return factor_cov.rows(); }

  /// Scalars held: n_b (n_x + 2) + n_x^2.
  Index storage_scalars() const {
    return mean.size() + loadings.size() + factor_cov.size() + specific.size();
  }

  /// Throws DataError on shape mismatch, NumericalError when S is not PSD
  /// (eigenvalues below -1e-10 trace) or D has negative entries.
  void validate() const;

  Matrix dense_cov() const;

  /// Moments of a subset of base series (factor covariance shared).
  GaussianFactorMoments restrict(std::span<const Index> base) const;
};

/// Q c in O(n_b n_x).
Vector cov_vec(const GaussianFactorMoments& fc, const Eigen::Ref<const Vector>& c);

/// c' Q c.
double quad_form(const GaussianFactorMoments& fc, const Eigen::Ref<const Vector>& c);

/// Q^{-1} rhs via the Woodbury identity; O(n_b n_x^2) per column.
Matrix woodbury_solve(const GaussianFactorMoments& fc, const Eigen::Ref<const Matrix>& rhs);

/// log det Q via the matrix determinant lemma.
double logdet(const GaussianFactorMoments& fc);

/// Reusable factorization behind woodbury_solve and logdet.
///
/// The factor covariance is split as S = V diag(lam) V' (eigenvalues below
/// 1e-12 lam_max clipped to zero) so that Q = diag(D) + B B' with
/// B = L V diag(sqrt(lam)). The capacitance I + B' D^{-1} B is always
/// positive definite and is itself eigendecomposed, giving both the solve
/// and the log-determinant from one factorization. Specific variances are
/// floored at 1e-10 x median(D) first.
class FactorSolver {
 public:
  explicit FactorSolver(const GaussianFactorMoments& fc);

  Matrix solve(const Eigen::Ref<const Matrix>& rhs) const;
  double logdet() const { return logdet_; }

 private:
  Vector d_inv_;
  Matrix b_;
  Matrix cap_vecs_;
  Vector cap_vals_;
  double logdet_ = 0.0;
};

/// Hierarchy-level view of base moments pushed through S. Exposes S f,
/// S L and exact pairwise covariances without forming the n x n matrix.
class HierarchyMoments {
 public:
  HierarchyMoments(const GaussianFactorMoments& fc, const SummingMatrix& s,
                   Index dense_cap = kDefaultDenseCap);

  Index size() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& loadings() const { return loadings_; }
  const Matrix& factor_cov() const { return factor_cov_; }

  double cov(Index i, Index j) const;
  double variance(Index i) const { return cov(i, i); }
  Vector variances() const;

  /// Full n x n covariance; throws NumericalError beyond the dense cap.
  Matrix dense() const;

 private:
  Vector mean_;
  Matrix loadings_;
  Matrix factor_cov_;
  Vector specific_;
  SparseRowMatrix s_;
  Index dense_cap_;
};

HierarchyMoments project(const GaussianFactorMoments& fc, const SummingMatrix& s,
                         Index dense_cap = kDefaultDenseCap);

}  // namespace dhf
