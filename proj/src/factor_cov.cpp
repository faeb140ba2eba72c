#include "dhf/factor_cov.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dhf/errors.hpp"

namespace dhf {

namespace {

void check_dim(Index got, Index want, const char* what) {
  if (got != want) {
    throw DataError(std::string(what) + ": dimension " + std::to_string(got) + ", expected " +
                    std::to_string(want));
  }
}

double median(Vector v) {
  if (v.size() == 0) return 0.0;
  auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

void GaussianFactorMoments::validate() const {
  const Index nb = mean.size();
  check_dim(loadings.rows(), nb, "factor moments loadings rows");
  check_dim(specific.size(), nb, "factor moments specific");
  check_dim(factor_cov.rows(), loadings.cols(), "factor moments factor_cov");
  check_dim(factor_cov.cols(), loadings.cols(), "factor moments factor_cov");
  if (factor_cov.size() > 0) {
    if (!factor_cov.isApprox(factor_cov.transpose(), 1e-10) &&
        (factor_cov - factor_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw NumericalError("factor covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(factor_cov, Eigen::EigenvaluesOnly);
    const double tr = std::max(factor_cov.trace(), 0.0);
    if (eig.eigenvalues().minCoeff() < -1e-10 * tr) {
      throw NumericalError("factor covariance is not positive semi-definite");
    }
  }
  if (specific.size() > 0 && specific.minCoeff() < 0.0) {
    throw NumericalError("specific variances must be nonnegative");
  }
}

Matrix GaussianFactorMoments::dense_cov() const {
  Matrix q = loadings * factor_cov * loadings.transpose();
  q.diagonal() += specific;
  return q;
}

GaussianFactorMoments GaussianFactorMoments::restrict(std::span<const Index> base) const {
  GaussianFactorMoments out;
  const auto m = static_cast<Index>(base.size());
  out.mean.resize(m);
  out.loadings.resize(m, loadings.cols());
  out.specific.resize(m);
  for (Index k = 0; k < m; ++k) {
    const Index i = base[static_cast<std::size_t>(k)];
    out.mean[k] = mean[i];
    out.loadings.row(k) = loadings.row(i);
    out.specific[k] = specific[i];
  }
  out.factor_cov = factor_cov;
  return out;
}

Vector cov_vec(const GaussianFactorMoments& fc, const Eigen::Ref<const Vector>& c) {
  check_dim(c.size(), fc.n_base(), "cov_vec");
  Vector out = fc.loadings * (fc.factor_cov * (fc.loadings.transpose() * c));
  out.array() += fc.specific.array() * c.array();
  return out;
}

double quad_form(const GaussianFactorMoments& fc, const Eigen::Ref<const Vector>& c) {
  check_dim(c.size(), fc.n_base(), "quad_form");
  const Vector lc = fc.loadings.transpose() * c;
  const double common = lc.dot(fc.factor_cov * lc);
  const double specific = (fc.specific.array() * c.array().square()).sum();
  return std::max(common, 0.0) + specific;
}

FactorSolver::FactorSolver(const GaussianFactorMoments& fc) {
  const Index nb = fc.n_base();
  check_dim(fc.specific.size(), nb, "woodbury specific");
  Vector d = fc.specific;
  const double floor = 1e-10 * median(d);
  d = d.cwiseMax(floor);
  if (nb > 0 && d.minCoeff() <= 0.0) {
    const double jitter = 1e-8 * std::max(fc.dense_cov().trace() / static_cast<double>(nb), 1.0);
    throw NumericalError("factor covariance has zero specific variances; numerical rank deficient "
                         "(suggested jitter " + std::to_string(jitter) + ")");
  }
  d_inv_ = d.cwiseInverse();
  logdet_ = d.array().log().sum();

  const Index nx = fc.n_factors();
  if (nx == 0) return;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (fc.factor_cov + fc.factor_cov.transpose()));
  const Vector& lam = eig.eigenvalues();
  const double lam_max = std::max(lam.maxCoeff(), 0.0);
  std::vector<Index> keep;
  for (Index k = 0; k < nx; ++k)
    if (lam[k] > 1e-12 * lam_max && lam[k] > 0.0) keep.push_back(k);
  b_.resize(nb, static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const Index j = keep[k];
    b_.col(static_cast<Index>(k)) = fc.loadings * eig.eigenvectors().col(j) * std::sqrt(lam[j]);
  }
  if (b_.cols() == 0) return;
  Matrix cap = b_.transpose() * d_inv_.asDiagonal() * b_;
  cap.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> ceig(cap);
  cap_vals_ = ceig.eigenvalues();
  cap_vecs_ = ceig.eigenvectors();
  if (cap_vals_.minCoeff() <= 0.0) {
    throw NumericalError("factor covariance: singular capacitance matrix");
  }
  logdet_ += cap_vals_.array().log().sum();
}

Matrix FactorSolver::solve(const Eigen::Ref<const Matrix>& rhs) const {
  check_dim(rhs.rows(), d_inv_.size(), "woodbury_solve rhs");
  Matrix z = d_inv_.asDiagonal() * rhs;
  if (b_.cols() == 0) return z;
  Matrix w = b_.transpose() * z;
  w = cap_vecs_ * (cap_vals_.cwiseInverse().asDiagonal() * (cap_vecs_.transpose() * w));
  z.noalias() -= d_inv_.asDiagonal() * (b_ * w);
  return z;
}

Matrix woodbury_solve(const GaussianFactorMoments& fc, const Eigen::Ref<const Matrix>& rhs) {
  return FactorSolver(fc).solve(rhs);
}

double logdet(const GaussianFactorMoments& fc) {
  const double ld = FactorSolver(fc).logdet();
  if (!std::isfinite(ld)) throw NumericalError("logdet: nonpositive determinant");
  return ld;
}

// ---------------------------------------------------------------------------

HierarchyMoments::HierarchyMoments(const GaussianFactorMoments& fc, const SummingMatrix& s,
                                   Index dense_cap)
    : mean_(s.apply(fc.mean)),
      loadings_(s.sparse() * fc.loadings),
      factor_cov_(fc.factor_cov),
      specific_(fc.specific),
      s_(s.sparse()),
      dense_cap_(dense_cap) {}

double HierarchyMoments::cov(Index i, Index j) const {
  double c = loadings_.row(i).dot(factor_cov_ * loadings_.row(j).transpose());
  // Sparse dot of rows i and j of S weighted by D.
  SparseRowMatrix::InnerIterator a(s_, i), b(s_, j);
  while (a && b) {
    if (a.col() < b.col()) ++a;
    else if (b.col() < a.col()) ++b;
    else {
      c += a.value() * b.value() * specific_[a.col()];
      ++a;
      ++b;
    }
  }
  return c;
}

Vector HierarchyMoments::variances() const {
  Vector v(size());
  for (Index i = 0; i < size(); ++i) v[i] = variance(i);
  return v;
}

Matrix HierarchyMoments::dense() const {
  if (size() > dense_cap_) {
    throw NumericalError("dense covariance of " + std::to_string(size()) +
                         " series exceeds the cap of " + std::to_string(dense_cap_));
  }
  Matrix sd = Matrix(s_) * specific_.asDiagonal() * Matrix(s_).transpose();
  return loadings_ * factor_cov_ * loadings_.transpose() + sd;
}

HierarchyMoments project(const GaussianFactorMoments& fc, const SummingMatrix& s, Index dense_cap) {
  return HierarchyMoments(fc, s, dense_cap);
}

}  // namespace dhf
