#pragma once

#include "dhf/hierarchy.hpp"
#include "dhf/structured_cov.hpp"
#include "dhf/types.hpp"

namespace dhf {

/// Shrinkage covariance towards the diagonal: sample variances are kept,
/// correlations are scaled by (1 - lambda).
struct ShrunkCovariance {
  Matrix cov;
  Vector var;
  double lambda = 1.0;
};

/// Estimates the covariance of the columns of `residuals` (rows are times).
/// Rows with any NaN are dropped. Needs at least two complete rows.
ShrunkCovariance shrink_cov(const Matrix& residuals);

enum class MintMode { ols, wls, shrink };

/// Trace-minimising reconciliation with a fixed error covariance W (n x n).
class Mint {
 public:
  Mint(const SummingMatrix& s, Matrix w);

  /// W = I, W = diag(variances) or the shrunk residual covariance.
  static Mint ols(const SummingMatrix& s);
  static Mint wls(const SummingMatrix& s, const Vector& variances);
  static Mint shrink(const SummingMatrix& s, const Matrix& residuals);

  /// G = (S' W^-1 S)^-1 S' W^-1, n_b x n.
  const Matrix& g() const { return g_; }
  const Matrix& w() const { return w_; }

  Vector reconcile_base(const Vector& y_hat) const;
  Vector reconcile(const Vector& y_hat) const;

  /// G W G', the base-level covariance of the reconciled forecast.
  Matrix base_cov() const;
  /// S G W G' S'.
  Matrix full_cov() const;

 private:
  const SummingMatrix* s_;
  Matrix w_;
  Matrix g_;
};

/// Bottom-up forecast from base means and a base covariance.
struct BottomUp {
  Vector base_mean;
  StructuredCovariance base_cov;
  Vector mean;  // S f_b, all n series
};

/// Diagonal base covariance.
BottomUp bottom_up(const SummingMatrix& s, const Vector& mean, const Vector& var);
/// Base covariance D^1/2 R D^1/2 with R the shrunk correlation of
/// `residuals` and D the given variances.
BottomUp bottom_up_shrink(const SummingMatrix& s, const Vector& mean, const Vector& var, const Matrix& residuals);

}  // namespace dhf
