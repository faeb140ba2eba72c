#include "dhf/structured_cov.hpp"

#include <cmath>
#include <numeric>
#include <unordered_map>

#include "dhf/errors.hpp"

namespace dhf {

namespace {

struct DisjointSets {
  std::vector<Index> parent;
  explicit DisjointSets(Index n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), Index{0});
  }
  Index find(Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      auto& p = parent[static_cast<std::size_t>(x)];
      p = parent[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  }
  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

StructuredCovariance::StructuredCovariance(Matrix loadings, Matrix factor_cov, Vector diag,
                                           std::vector<CovBlock> blocks)
    : loadings_(std::move(loadings)),
      factor_cov_(std::move(factor_cov)),
      diag_(std::move(diag)),
      blocks_(std::move(blocks)) {
  if (loadings_.cols() == 0) loadings_.resize(diag_.size(), 0);
  if (loadings_.rows() != diag_.size() || factor_cov_.rows() != loadings_.cols() ||
      factor_cov_.cols() != loadings_.cols()) {
    throw DataError("structured covariance: inconsistent dimensions");
  }
  index_blocks();
}

void StructuredCovariance::index_blocks() {
  block_of_.assign(static_cast<std::size_t>(diag_.size()), -1);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto& blk = blocks_[k];
    const auto m = static_cast<Index>(blk.index.size());
    if (blk.cov.rows() != m || blk.cov.cols() != m) {
      throw DataError("structured covariance: block shape mismatch");
    }
    for (Index i : blk.index) {
      if (i < 0 || i >= diag_.size()) throw DataError("structured covariance: block index out of range");
      if (block_of_[static_cast<std::size_t>(i)] >= 0) {
        throw DataError("structured covariance: blocks overlap");
      }
      block_of_[static_cast<std::size_t>(i)] = static_cast<Index>(k);
    }
    for (Index a = 0; a < m; ++a) diag_[blk.index[static_cast<std::size_t>(a)]] = blk.cov(a, a);
  }
}

StructuredCovariance StructuredCovariance::from_factor(const GaussianFactorMoments& fc) {
  return {fc.loadings, fc.factor_cov, fc.specific, {}};
}

StructuredCovariance StructuredCovariance::from_dense(const Matrix& cov) {
  CovBlock blk;
  blk.index.resize(static_cast<std::size_t>(cov.rows()));
  std::iota(blk.index.begin(), blk.index.end(), Index{0});
  blk.cov = cov;
  return {Matrix(cov.rows(), 0), Matrix(0, 0), cov.diagonal(), {std::move(blk)}};
}

double StructuredCovariance::variance(Index i) const {
  double v = diag_[i];
  if (loadings_.cols() > 0) v += loadings_.row(i).dot(factor_cov_ * loadings_.row(i).transpose());
  return v;
}

Vector StructuredCovariance::variances() const {
  Vector v = diag_;
  if (loadings_.cols() > 0) v += ((loadings_ * factor_cov_).array() * loadings_.array()).rowwise().sum().matrix();
  return v;
}

Vector StructuredCovariance::cov_vec(const Eigen::Ref<const Vector>& c) const {
  if (c.size() != size()) throw DataError("structured covariance: vector size mismatch");
  Vector out(size());
  for (Index i = 0; i < size(); ++i)
    if (block_of_[static_cast<std::size_t>(i)] < 0) out[i] = diag_[i] * c[i];
  for (const auto& blk : blocks_) {
    Vector sub(static_cast<Index>(blk.index.size()));
    for (std::size_t a = 0; a < blk.index.size(); ++a) sub[static_cast<Index>(a)] = c[blk.index[a]];
    const Vector r = blk.cov * sub;
    for (std::size_t a = 0; a < blk.index.size(); ++a) out[blk.index[a]] = r[static_cast<Index>(a)];
  }
  if (loadings_.cols() > 0) out += loadings_ * (factor_cov_ * (loadings_.transpose() * c));
  return out;
}

double StructuredCovariance::quad_form(const Eigen::Ref<const Vector>& c) const {
  return c.dot(cov_vec(c));
}

const StructuredCovariance::Factorization& StructuredCovariance::factorization() const {
  if (fact_) return *fact_;
  auto f = std::make_shared<Factorization>();
  for (Index i = 0; i < size(); ++i) {
    if (block_of_[static_cast<std::size_t>(i)] >= 0) continue;
    if (!(diag_[i] > 0.0)) throw NumericalError("structured covariance: nonpositive variance");
    f->logdet += std::log(diag_[i]);
  }
  for (const auto& blk : blocks_) {
    Eigen::LLT<Matrix> llt(blk.cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("structured covariance: block is not positive definite");
    }
    f->logdet += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    f->block_llt.push_back(std::move(llt));
  }
  fact_ = f;
  if (loadings_.cols() > 0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (factor_cov_ + factor_cov_.transpose()));
    const Vector& lam = eig.eigenvalues();
    const double lam_max = std::max(lam.maxCoeff(), 0.0);
    std::vector<Index> keep;
    for (Index k = 0; k < lam.size(); ++k)
      if (lam[k] > 1e-12 * lam_max && lam[k] > 0.0) keep.push_back(k);
    f->b.resize(size(), static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k)
      f->b.col(static_cast<Index>(k)) = loadings_ * eig.eigenvectors().col(keep[k]) * std::sqrt(lam[keep[k]]);
    if (f->b.cols() > 0) {
      f->a_inv_b = solve_residual(f->b);
      Matrix cap = f->b.transpose() * f->a_inv_b;
      cap.diagonal().array() += 1.0;
      f->cap.compute(cap);
      if (f->cap.info() != Eigen::Success) throw NumericalError("structured covariance: singular capacitance");
      f->logdet += 2.0 * f->cap.matrixLLT().diagonal().array().log().sum();
    }
  }
  return *f;
}

Matrix StructuredCovariance::solve_residual(const Eigen::Ref<const Matrix>& rhs) const {
  const auto& f = *fact_;
  Matrix out(rhs.rows(), rhs.cols());
  for (Index i = 0; i < size(); ++i)
    if (block_of_[static_cast<std::size_t>(i)] < 0) out.row(i) = rhs.row(i) / diag_[i];
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto& idx = blocks_[k].index;
    Matrix sub(static_cast<Index>(idx.size()), rhs.cols());
    for (std::size_t a = 0; a < idx.size(); ++a) sub.row(static_cast<Index>(a)) = rhs.row(idx[a]);
    sub = f.block_llt[k].solve(sub);
    for (std::size_t a = 0; a < idx.size(); ++a) out.row(idx[a]) = sub.row(static_cast<Index>(a));
  }
  return out;
}

Matrix StructuredCovariance::solve(const Eigen::Ref<const Matrix>& rhs) const {
  if (rhs.rows() != size()) throw DataError("structured covariance: rhs size mismatch");
  const auto& f = factorization();
  Matrix z = solve_residual(rhs);
  if (f.b.cols() == 0) return z;
  const Matrix w = f.cap.solve(f.b.transpose() * z);
  z.noalias() -= f.a_inv_b * w;
  return z;
}

double StructuredCovariance::logdet() const { return factorization().logdet; }

Matrix StructuredCovariance::dense(Index cap) const {
  if (size() > cap) {
    throw NumericalError("dense covariance of " + std::to_string(size()) +
                         " series exceeds the cap of " + std::to_string(cap));
  }
  Matrix q = Matrix::Zero(size(), size());
  if (loadings_.cols() > 0) q = loadings_ * factor_cov_ * loadings_.transpose();
  for (Index i = 0; i < size(); ++i)
    if (block_of_[static_cast<std::size_t>(i)] < 0) q(i, i) += diag_[i];
  for (const auto& blk : blocks_) {
    for (std::size_t a = 0; a < blk.index.size(); ++a)
      for (std::size_t b = 0; b < blk.index.size(); ++b)
        q(blk.index[a], blk.index[b]) += blk.cov(static_cast<Index>(a), static_cast<Index>(b));
  }
  return q;
}

StructuredCovariance StructuredCovariance::transform(const SparseRowMatrix& r, Index cap) const {
  if (r.cols() != size()) throw DataError("structured covariance: transform size mismatch");
  const Index m = r.rows();
  const auto n_blocks = static_cast<Index>(blocks_.size());
  auto group_of = [&](Index c) {
    const Index b = block_of_[static_cast<std::size_t>(c)];
    return b >= 0 ? b : n_blocks + c;
  };

  DisjointSets rows(m);
  std::unordered_map<Index, Index> first_row;
  for (Index i = 0; i < m; ++i) {
    for (SparseRowMatrix::InnerIterator it(r, i); it; ++it) {
      auto [pos, fresh] = first_row.emplace(group_of(it.col()), i);
      if (!fresh) rows.unite(i, pos->second);
    }
  }
  std::vector<std::vector<Index>> comps;
  std::unordered_map<Index, std::size_t> comp_of_root;
  for (Index i = 0; i < m; ++i) {
    const Index root = rows.find(i);
    auto [pos, fresh] = comp_of_root.emplace(root, comps.size());
    if (fresh) comps.emplace_back();
    comps[pos->second].push_back(i);
  }

  Vector diag = Vector::Zero(m);
  std::vector<CovBlock> out_blocks;
  for (const auto& comp : comps) {
    // Base indices touched, expanded to whole blocks.
    std::vector<Index> cols;
    std::vector<char> seen_block(static_cast<std::size_t>(n_blocks), 0);
    std::unordered_map<Index, Index> local;
    for (Index i : comp) {
      for (SparseRowMatrix::InnerIterator it(r, i); it; ++it) {
        const Index b = block_of_[static_cast<std::size_t>(it.col())];
        if (b >= 0) {
          if (seen_block[static_cast<std::size_t>(b)]) continue;
          seen_block[static_cast<std::size_t>(b)] = 1;
          for (Index c : blocks_[static_cast<std::size_t>(b)].index) {
            local.emplace(c, static_cast<Index>(cols.size()));
            cols.push_back(c);
          }
        } else if (local.emplace(it.col(), static_cast<Index>(cols.size())).second) {
          cols.push_back(it.col());
        }
      }
    }
    const auto u = static_cast<Index>(cols.size());
    if (u > cap) {
      throw NumericalError("covariance transform touches " + std::to_string(u) +
                           " correlated series, above the cap of " + std::to_string(cap));
    }
    Matrix a = Matrix::Zero(u, u);
    for (Index k = 0; k < u; ++k) {
      if (block_of_[static_cast<std::size_t>(cols[static_cast<std::size_t>(k)])] < 0)
        a(k, k) = diag_[cols[static_cast<std::size_t>(k)]];
    }
    for (std::size_t b = 0; b < seen_block.size(); ++b) {
      if (!seen_block[b]) continue;
      const auto& idx = blocks_[b].index;
      for (std::size_t p = 0; p < idx.size(); ++p)
        for (std::size_t q = 0; q < idx.size(); ++q)
          a(local[idx[p]], local[idx[q]]) = blocks_[b].cov(static_cast<Index>(p), static_cast<Index>(q));
    }
    Matrix rc = Matrix::Zero(static_cast<Index>(comp.size()), u);
    for (std::size_t k = 0; k < comp.size(); ++k)
      for (SparseRowMatrix::InnerIterator it(r, comp[k]); it; ++it)
        rc(static_cast<Index>(k), local[it.col()]) = it.value();
    Matrix mc = rc * a * rc.transpose();
    if (comp.size() == 1) {
      diag[comp[0]] = mc(0, 0);
    } else {
      out_blocks.push_back({comp, 0.5 * (mc + mc.transpose())});
    }
  }
  Matrix rl = r * loadings_;
  return {std::move(rl), factor_cov_, std::move(diag), std::move(out_blocks)};
}

}  // namespace dhf
