#pragma once

// Dense reference computations and random instance generators shared by the
// unit tests and the acceptance binary. Nothing here calls the structured
// algorithms under test.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dhf/dlm.hpp"
#include "dhf/factor_cov.hpp"
#include "dhf/hierarchy.hpp"

namespace oracle {

using dhf::Index;
using dhf::Matrix;
using dhf::Vector;

inline Matrix randn(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> n01;
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = n01(rng);
  return m;
}

inline Vector randn(std::mt19937_64& rng, Index n) { return randn(rng, n, 1).col(0); }

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Matrix random_spd(std::mt19937_64& rng, Index n, double ridge = 0.1) {
  const Matrix a = randn(rng, n, n);
  return a * a.transpose() / static_cast<double>(n) + ridge * Matrix::Identity(n, n);
}

inline dhf::GaussianFactorMoments random_moments(std::mt19937_64& rng, Index nb, Index nx) {
  dhf::GaussianFactorMoments fc;
  fc.mean = randn(rng, nb);
  fc.loadings = randn(rng, nb, nx);
  fc.factor_cov = random_spd(rng, nx);
  fc.specific = Vector(nb);
  for (Index i = 0; i < nb; ++i) fc.specific[i] = uniform(rng, 0.2, 2.0);
  return fc;
}

inline Matrix dense(const dhf::GaussianFactorMoments& fc) {
  Matrix q = fc.loadings * fc.factor_cov * fc.loadings.transpose();
  q.diagonal() += fc.specific;
  return q;
}

inline double rel_err(const Matrix& got, const Matrix& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(1.0, want.cwiseAbs().maxCoeff());
}

inline double max_abs(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline Matrix pinv(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double tol = 1e-12 * std::max<double>(static_cast<double>(std::max(a.rows(), a.cols())), 1.0) *
                     (s.size() ? s[0] : 0.0);
  Vector inv = Vector::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i)
    if (s[i] > tol) inv[i] = 1.0 / s[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Gaussian conditioning of N(f, Q) on c'b = value.
struct Conditioned {
  Vector mean;
  Matrix cov;
};
inline Conditioned condition(const Vector& f, const Matrix& q, const Vector& c, double value) {
  const Vector g = q * c;
  const double v = c.dot(g);
  return {f + g * ((value - c.dot(f)) / v), q - g * g.transpose() / v};
}

/// Covariance-form Kalman filter with block discounting and optional
/// discounted variance learning.
struct KalmanFilter {
  Matrix g;
  std::vector<std::pair<Index, Index>> ranges;
  std::vector<double> discounts;
  bool learn = true;
  double delta_v = 1.0;
  Vector m;
  Matrix c;
  double n = 1.0;
  double d = 1.0;

  struct Step {
    double f = 0.0;
    double q = 0.0;
  };

  Step step(const Vector& fvec, double y) {
    const Vector a = g * m;
    const Matrix p = g * c * g.transpose();
    Matrix r = p;
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      const auto [b0, b1] = ranges[k];
      r.block(b0, b0, b1 - b0, b1 - b0) += (1.0 - discounts[k]) / discounts[k] * p.block(b0, b0, b1 - b0, b1 - b0);
    }
    const double v = d / n;
    Step out;
    out.f = fvec.dot(a);
    out.q = fvec.dot(r * fvec) + v;
    const double e = y - out.f;
    const Vector k = r * fvec / out.q;
    m = a + k * e;
    c = r - k * fvec.transpose() * r;
    c = 0.5 * (c + c.transpose());
    if (learn) {
      const double s_prev = v;
      n = delta_v * n + 1.0;
      d = delta_v * d + s_prev * e * e / out.q;
    }
    return out;
  }
};

/// Random structural model of state dimension at most 8.
inline dhf::DlmSpec random_spec(std::mt19937_64& rng) {
  dhf::DlmSpec spec;
  auto disc = [&] { return uniform(rng, 0.85, 1.0); };
  spec.blocks.push_back(uniform_int(rng, 0, 1) ? dhf::Block::trend(disc()) : dhf::Block::level(disc()));
  if (uniform_int(rng, 0, 1)) {
    const int period = uniform_int(rng, 2, 12);
    const int harmonics = uniform_int(rng, 1, std::min(2, period / 2));
    spec.blocks.push_back(dhf::Block::seasonal(period, harmonics, disc()));
  }
  const int room = 8 - static_cast<int>(spec.dim());
  if (room > 0 && uniform_int(rng, 0, 1)) spec.blocks.push_back(dhf::Block::regression(uniform_int(rng, 1, std::min(3, room)), disc()));
  spec.variance_discount = uniform(rng, 0.95, 1.0);
  spec.learn_variance = uniform_int(rng, 0, 3) != 0;
  spec.fixed_variance = uniform(rng, 0.5, 2.0);
  return spec;
}

inline KalmanFilter kalman_for(const dhf::DlmSpec& spec, const Vector& m, const Matrix& c, double n, double d) {
  KalmanFilter kf;
  kf.g = dhf::system_matrix(spec);
  kf.ranges = spec.block_ranges();
  for (const auto& b : spec.blocks) kf.discounts.push_back(b.discount);
  kf.learn = spec.learn_variance;
  kf.delta_v = spec.variance_discount;
  kf.m = m;
  kf.c = c;
  kf.n = n;
  kf.d = spec.learn_variance ? d : spec.fixed_variance * n;
  return kf;
}

/// Generic multivariate DLM measurement step y = X theta + N(0, V) with a
/// possibly singular innovation covariance (pseudo-inverse).
inline void stacked_update(Vector& m, Matrix& c, double delta, const Matrix& x, const Vector& y, const Matrix& v) {
  const Matrix r = c / delta;
  const Matrix q = x * r * x.transpose() + v;
  const Matrix k = r * x.transpose() * pinv(q);
  m = m + k * (y - x * m);
  c = r - k * x * r;
  c = 0.5 * (c + c.transpose());
}

/// Edges for a random tree hierarchy with `levels` levels (root level
/// included, base level included) and at most `max_base` base series.
inline std::vector<dhf::Edge> random_tree(std::mt19937_64& rng, int levels, int max_base) {
  std::vector<dhf::Edge> edges;
  edges.push_back({"", "T", "L0"});
  std::vector<std::string> frontier{"T"};
  for (int l = 1; l < levels; ++l) {
    const bool last = l == levels - 1;
    std::vector<std::string> next;
    const int parents = static_cast<int>(frontier.size());
    const int fan = last ? std::max(1, std::min(12, max_base / parents)) : 4;
    for (const auto& parent : frontier) {
      const int k = uniform_int(rng, 1, fan);
      for (int j = 0; j < k; ++j) {
        const std::string id = parent + "_" + std::to_string(j);
        edges.push_back({parent, id, "L" + std::to_string(l)});
        next.push_back(id);
      }
    }
    frontier = std::move(next);
  }
  return edges;
}

/// The three-level example: T over A, B, C with four, three and three
/// base series.
inline std::vector<dhf::Edge> example_tree() {
  std::vector<dhf::Edge> e{{"", "T", "total"}, {"T", "A", "region"}, {"T", "B", "region"}, {"T", "C", "region"}};
  for (int i = 1; i <= 4; ++i) e.push_back({"A", "A" + std::to_string(i), "site"});
  for (int i = 1; i <= 3; ++i) e.push_back({"B", "B" + std::to_string(i), "site"});
  for (int i = 1; i <= 3; ++i) e.push_back({"C", "C" + std::to_string(i), "site"});
  return e;
}

}  // namespace oracle
