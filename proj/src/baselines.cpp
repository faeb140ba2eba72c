#include "dhf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dhf/errors.hpp"

namespace dhf {

ShrunkCovariance shrink_cov(const Matrix& residuals) {
  std::vector<Index> rows;
  for (Index t = 0; t < residuals.rows(); ++t)
    if (residuals.row(t).allFinite()) rows.push_back(t);
  const Index t_n = static_cast<Index>(rows.size());
  const Index n = residuals.cols();
  if (t_n < 2) throw DataError("shrink_cov needs at least two complete residual rows");
  Matrix r(t_n, n);
  for (Index k = 0; k < t_n; ++k) r.row(k) = residuals.row(rows[static_cast<std::size_t>(k)]);
  r.rowwise() -= r.colwise().mean();

  const double tt = static_cast<double>(t_n);
  ShrunkCovariance out;
  out.var = r.colwise().squaredNorm().transpose() / (tt - 1.0);

  // Standardised columns; constant columns stay zero and so count as
  // uncorrelated with everything.
  Matrix x = Matrix::Zero(t_n, n);
  for (Index i = 0; i < n; ++i) {
    const double sd = std::sqrt(out.var[i]);
    if (sd > 0.0) x.col(i) = r.col(i) / sd;
  }
  const Matrix wbar = (x.transpose() * x) / tt;
  Matrix corr = wbar * (tt / (tt - 1.0));

  if (t_n < 3) {
    // Two points give correlations of exactly +-1 with no spread to
    // estimate their variance from; shrink fully.
    out.lambda = 1.0;
  } else {
    const Matrix x2 = x.cwiseAbs2();
    const Vector row2 = x2.rowwise().sum();
    const double sum_w2_all = row2.squaredNorm();         // sum_k sum_ij x_ki^2 x_kj^2
    const double sum_w2_diag = x2.cwiseAbs2().sum();      // i == j terms
    const double sum_wbar2_all = wbar.squaredNorm();
    const double sum_wbar2_diag = wbar.diagonal().squaredNorm();
    const double ss = (sum_w2_all - sum_w2_diag) - tt * (sum_wbar2_all - sum_wbar2_diag);
    const double var_sum = tt / std::pow(tt - 1.0, 3) * std::max(ss, 0.0);
    const double r2_sum = corr.squaredNorm() - corr.diagonal().squaredNorm();
    out.lambda = r2_sum > 0.0 ? std::clamp(var_sum / r2_sum, 0.0, 1.0) : 1.0;
  }

  corr *= 1.0 - out.lambda;
  const Vector sd = out.var.cwiseSqrt();
  out.cov = sd.asDiagonal() * corr * sd.asDiagonal();
  out.cov.diagonal() = out.var;
  return out;
}

Mint::Mint(const SummingMatrix& s, Matrix w) : s_(&s), w_(std::move(w)) {
  const Index n = s.rows();
  if (w_.rows() != n || w_.cols() != n) throw DataError("MinT: W must be n x n");
  Eigen::LDLT<Matrix> w_fact(w_);
  if (w_fact.info() != Eigen::Success || !w_fact.isPositive()) throw NumericalError("MinT: W is not positive definite");
  const Matrix sd = s.dense();
  const Matrix winv_s = w_fact.solve(sd);  // W^-1 S
  const Matrix normal = sd.transpose() * winv_s;
  Eigen::LDLT<Matrix> n_fact(normal);
  const Vector d = n_fact.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (n_fact.info() != Eigen::Success || !(d.minCoeff() > 1e-13 * dmax)) {
    throw NumericalError("MinT: S' W^-1 S is singular");
  }
  g_ = n_fact.solve(winv_s.transpose());
}

Mint Mint::ols(const SummingMatrix& s) { return Mint(s, Matrix::Identity(s.rows(), s.rows())); }

Mint Mint::wls(const SummingMatrix& s, const Vector& variances) {
  if (variances.size() != s.rows()) throw DataError("MinT-WLS: one variance per series required");
  if (!(variances.minCoeff() > 0.0)) throw NumericalError("MinT-WLS: variances must be positive");
  return Mint(s, Matrix(variances.asDiagonal()));
}

Mint Mint::shrink(const SummingMatrix& s, const Matrix& residuals) {
  if (residuals.cols() != s.rows()) throw DataError("MinT-Shrink: residuals need one column per series");
  return Mint(s, shrink_cov(residuals).cov);
}

Vector Mint::reconcile_base(const Vector& y_hat) const {
  if (y_hat.size() != s_->rows()) throw DataError("MinT: forecast vector has the wrong size");
  // A coherent input is a fixed point of the projection; return it as is
  // rather than through G, which would only add rounding.
  if (y_hat.allFinite() && check_coherence(y_hat, *s_, 0.0).coherent) return y_hat.tail(s_->cols());
  return g_ * y_hat;
}

Vector Mint::reconcile(const Vector& y_hat) const { return s_->apply(reconcile_base(y_hat)); }

Matrix Mint::base_cov() const {
  Matrix c = g_ * w_ * g_.transpose();
  return 0.5 * (c + c.transpose());
}

Matrix Mint::full_cov() const {
  const Matrix sd = s_->dense();
  return sd * base_cov() * sd.transpose();
}

BottomUp bottom_up(const SummingMatrix& s, const Vector& mean, const Vector& var) {
  if (mean.size() != s.cols() || var.size() != s.cols()) throw DataError("bottom-up: one value per base series");
  BottomUp out;
  out.base_mean = mean;
  out.base_cov = StructuredCovariance(Matrix::Zero(mean.size(), 0), Matrix::Zero(0, 0), var.cwiseMax(0.0), {});
  out.mean = s.apply(mean);
  return out;
}

BottomUp bottom_up_shrink(const SummingMatrix& s, const Vector& mean, const Vector& var, const Matrix& residuals) {
  if (residuals.cols() != s.cols()) throw DataError("bottom-up: residuals need one column per base series");
  const ShrunkCovariance sc = shrink_cov(residuals);
  const Vector sd_res = sc.var.cwiseSqrt();
  const Vector sd = var.cwiseMax(0.0).cwiseSqrt();
  Matrix cov = Matrix::Zero(mean.size(), mean.size());
  for (Index i = 0; i < cov.rows(); ++i) {
    for (Index j = 0; j < cov.cols(); ++j) {
      const double denom = sd_res[i] * sd_res[j];
      const double rho = i == j ? 1.0 : (denom > 0.0 ? sc.cov(i, j) / denom : 0.0);
      cov(i, j) = rho * sd[i] * sd[j];
    }
  }
  BottomUp out;
  out.base_mean = mean;
  out.base_cov = StructuredCovariance::from_dense(cov);
  out.mean = s.apply(mean);
  return out;
}

}  // namespace dhf
