#include "dhf/dlm.hpp"

#include <cmath>
#include <numbers>

#include "dhf/errors.hpp"

namespace dhf {

namespace {

constexpr double kMinForecastVariance = 1e-12;

// State positions of the regression coefficients, in regressor order.
std::vector<Index> regression_positions(const DlmSpec& spec) {
  std::vector<Index> pos;
  Index off = 0;
  for (const auto& b : spec.blocks) {
    if (b.kind == BlockKind::regression)
      for (int k = 0; k < b.width; ++k) pos.push_back(off + k);
    off += b.dim();
  }
  return pos;
}

Matrix inverse_sqrt_spd(const Matrix& v) {
  Eigen::LLT<Matrix> llt(v);
  if (llt.info() != Eigen::Success) throw NumericalError("observation covariance is not positive definite");
  // N with N'N = V^{-1}: N = L^{-1} where V = L L'.
  const Index r = v.rows();
  return llt.matrixL().solve(Matrix::Identity(r, r));
}

}  // namespace

Block Block::level(double discount) { return {BlockKind::level, 0, 0, 0, discount}; }
Block Block::trend(double discount) { return {BlockKind::trend, 0, 0, 0, discount}; }
Block Block::seasonal(int period, int harmonics, double discount) {
  return {BlockKind::seasonal, period, harmonics, 0, discount};
}
Block Block::regression(int width, double discount) {
  return {BlockKind::regression, 0, 0, width, discount};
}

int Block::n_harmonics() const { return harmonics > 0 ? harmonics : period / 2; }

Index Block::dim() const {
  switch (kind) {
    case BlockKind::level: return 1;
    case BlockKind::trend: return 2;
    case BlockKind::seasonal: {
      const int nh = n_harmonics();
      const bool nyquist = period % 2 == 0 && nh == period / 2;
      return 2 * nh - (nyquist ? 1 : 0);
    }
    case BlockKind::regression: return width;
  }
  return 0;
}

Index DlmSpec::dim() const {
  Index q = 0;
  for (const auto& b : blocks) q += b.dim();
  return q;
}

Index DlmSpec::n_regressors() const {
  Index k = 0;
  for (const auto& b : blocks)
    if (b.kind == BlockKind::regression) k += b.width;
  return k;
}

std::vector<std::pair<Index, Index>> DlmSpec::block_ranges() const {
  std::vector<std::pair<Index, Index>> out;
  Index off = 0;
  for (const auto& b : blocks) {
    out.emplace_back(off, off + b.dim());
    off += b.dim();
  }
  return out;
}

Index DlmSpec::regression_offset() const {
  Index off = 0;
  for (const auto& b : blocks) {
    if (b.kind == BlockKind::regression) return off;
    off += b.dim();
  }
  return -1;
}

void DlmSpec::validate() const {
  if (blocks.empty()) throw DataError("DLM spec has no components");
  for (const auto& b : blocks) {
    if (!(b.discount > 0.0 && b.discount <= 1.0)) throw DataError("block discount must lie in (0, 1]");
    if (b.kind == BlockKind::seasonal) {
      if (b.period < 2) throw DataError("seasonal period must be at least 2");
      if (b.harmonics < 0 || b.harmonics > b.period / 2) {
        throw DataError("seasonal harmonics must not exceed floor(period/2)");
      }
    }
    if (b.kind == BlockKind::regression && b.width < 0) throw DataError("negative regression width");
  }
  if (!(variance_discount > 0.0 && variance_discount <= 1.0)) {
    throw DataError("variance discount must lie in (0, 1]");
  }
  if (!learn_variance && !(fixed_variance > 0.0)) throw DataError("fixed observation variance must be positive");
}

Matrix system_matrix(const DlmSpec& spec) {
  const Index q = spec.dim();
  Matrix g = Matrix::Zero(q, q);
  Index off = 0;
  for (const auto& b : spec.blocks) {
    switch (b.kind) {
      case BlockKind::level: g(off, off) = 1.0; break;
      case BlockKind::trend:
        g(off, off) = 1.0;
        g(off, off + 1) = 1.0;
        g(off + 1, off + 1) = 1.0;
        break;
      case BlockKind::seasonal: {
        Index o = off;
        for (int r = 1; r <= b.n_harmonics(); ++r) {
          if (b.period % 2 == 0 && r == b.period / 2) {
            g(o, o) = -1.0;
            o += 1;
          } else {
            const double w = 2.0 * std::numbers::pi * r / b.period;
            g(o, o) = std::cos(w);
            g(o, o + 1) = std::sin(w);
            g(o + 1, o) = -std::sin(w);
            g(o + 1, o + 1) = std::cos(w);
            o += 2;
          }
        }
        break;
      }
      case BlockKind::regression:
        for (int k = 0; k < b.width; ++k) g(off + k, off + k) = 1.0;
        break;
    }
    off += b.dim();
  }
  return g;
}

Vector design_vector(const DlmSpec& spec, const Vector* regressors) {
  const Index k = spec.n_regressors();
  if (k > 0 && (regressors == nullptr || regressors->size() != k)) {
    throw DataError("DLM design: expected " + std::to_string(k) + " regressor values");
  }
  Vector f = Vector::Zero(spec.dim());
  Index off = 0;
  Index next = 0;
  for (const auto& b : spec.blocks) {
    switch (b.kind) {
      case BlockKind::level: f[off] = 1.0; break;
      case BlockKind::trend: f[off] = 1.0; break;
      case BlockKind::seasonal: {
        Index o = off;
        for (int r = 1; r <= b.n_harmonics(); ++r) {
          f[o] = 1.0;
          o += (b.period % 2 == 0 && r == b.period / 2) ? 1 : 2;
        }
        break;
      }
      case BlockKind::regression:
        for (int j = 0; j < b.width; ++j) f[off + j] = (*regressors)[next++];
        break;
    }
    off += b.dim();
  }
  return f;
}

Design build_design(const DlmSpec& spec, const Vector* regressors) {
  return {design_vector(spec, regressors), system_matrix(spec)};
}

SvdState SvdState::from_cov(Vector m, const Matrix& c) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (c + c.transpose()));
  return {std::move(m), eig.eigenvectors(), eig.eigenvalues().cwiseMax(0.0).cwiseSqrt()};
}

Matrix SvdState::cov() const { return u * s.array().square().matrix().asDiagonal() * u.transpose(); }
Matrix SvdPrior::cov() const { return u * s.array().square().matrix().asDiagonal() * u.transpose(); }

SvdPrior svd_predict(const SvdState& state, const Matrix& g,
                     std::span<const std::pair<Index, Index>> ranges, std::span<const double> discounts) {
  const Index q = state.m.size();
  // N_P' N_P = G C G'.
  const Matrix np = state.s.asDiagonal() * state.u.transpose() * g.transpose();
  Index extra = 0;
  for (std::size_t k = 0; k < ranges.size(); ++k)
    if (discounts[k] < 1.0) extra += q;
  Matrix stack = Matrix::Zero(q + extra, q);
  stack.topRows(q) = np;
  Index row = q;
  for (std::size_t k = 0; k < ranges.size(); ++k) {
    if (discounts[k] >= 1.0) continue;
    const auto [b0, b1] = ranges[k];
    const double scale = std::sqrt((1.0 - discounts[k]) / discounts[k]);
    stack.block(row, b0, q, b1 - b0) = scale * np.middleCols(b0, b1 - b0);
    row += q;
  }
  Eigen::JacobiSVD<Matrix> svd(stack, Eigen::ComputeFullV);
  Vector s = Vector::Zero(q);
  s.head(svd.singularValues().size()) = svd.singularValues();
  return {g * state.m, svd.matrixV(), s};
}

SvdPrior svd_predict(const SvdState& state, const DlmSpec& spec) {
  const auto ranges = spec.block_ranges();
  std::vector<double> d;
  for (const auto& b : spec.blocks) d.push_back(b.discount);
  return svd_predict(state, system_matrix(spec), ranges, d);
}

Matrix discount_innovation(const SvdState& state, const Matrix& g,
                           std::span<const std::pair<Index, Index>> ranges,
                           std::span<const double> discounts) {
  const Matrix p = g * state.cov() * g.transpose();
  Matrix w = Matrix::Zero(p.rows(), p.cols());
  for (std::size_t k = 0; k < ranges.size(); ++k) {
    const auto [b0, b1] = ranges[k];
    const double f = (1.0 - discounts[k]) / discounts[k];
    w.block(b0, b0, b1 - b0, b1 - b0) = f * p.block(b0, b0, b1 - b0, b1 - b0);
  }
  return w;
}

namespace {

SvdState information_update(const SvdPrior& prior, const Matrix& n_f_ur) {
  // Stack [N_{V^-1} F' U_R ; diag(1/s_R)]; its Gram matrix is U_R' C^{-1} U_R.
  const Index q = prior.a.size();
  const double smax = prior.s.size() > 0 ? prior.s.maxCoeff() : 0.0;
  const double floor = std::max(smax * 1e-14, std::numeric_limits<double>::min());
  Matrix stack(n_f_ur.rows() + q, q);
  stack.topRows(n_f_ur.rows()) = n_f_ur;
  stack.bottomRows(q) = prior.s.cwiseMax(floor).cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Matrix> svd(stack, Eigen::ComputeFullV);
  SvdState post;
  post.u = prior.u * svd.matrixV();
  post.s = svd.singularValues().cwiseInverse();
  return post;
}

}  // namespace

ScalarUpdate svd_update(const SvdPrior& prior, const Vector& f, double y, double v) {
  if (!(v > 0.0)) throw NumericalError("observation variance must be positive");
  ScalarUpdate out;
  const Vector uf = prior.u.transpose() * f;
  const Vector s2uf = prior.s.array().square().matrix().cwiseProduct(uf);
  out.f = f.dot(prior.a);
  out.q = uf.dot(s2uf) + v;
  if (!(out.q > 0.0)) throw NumericalError("forecast variance is not positive");
  out.q = std::max(out.q, kMinForecastVariance);
  out.e = y - out.f;
  const Matrix nf = uf.transpose() / std::sqrt(v);
  out.post = information_update(prior, nf);
  out.post.m = prior.a + prior.u * s2uf * (out.e / out.q);
  return out;
}

MultiUpdate svd_update(const SvdPrior& prior, const Matrix& f, const Vector& y, const Matrix& v) {
  MultiUpdate out;
  const Matrix uf = prior.u.transpose() * f;
  const Matrix rf = prior.u * (prior.s.array().square().matrix().asDiagonal() * uf);
  out.f = f.transpose() * prior.a;
  out.q = uf.transpose() * prior.s.array().square().matrix().asDiagonal() * uf + v;
  out.q = 0.5 * (out.q + out.q.transpose());
  out.e = y - out.f;
  Eigen::LLT<Matrix> qllt(out.q);
  if (qllt.info() != Eigen::Success) throw NumericalError("forecast covariance is not positive definite");
  out.post = information_update(prior, inverse_sqrt_spd(v) * uf.transpose());
  out.post.m = prior.a + rf * qllt.solve(out.e);
  return out;
}

VarianceState variance_update(const VarianceState& vs, double e, double q_star, double delta_v) {
  const double q = std::max(q_star, kMinForecastVariance);
  VarianceState out;
  out.n = delta_v * vs.n + 1.0;
  out.d = delta_v * vs.d + vs.s() * e * e / q;
  return out;
}

StatePath propagate(const SvdState& state, const DlmSpec& spec, int h) {
  const Matrix g = system_matrix(spec);
  const auto ranges = spec.block_ranges();
  std::vector<double> d;
  for (const auto& b : spec.blocks) d.push_back(b.discount);
  const Matrix w = discount_innovation(state, g, ranges, d);
  StatePath path;
  Vector a = state.m;
  Matrix r = state.cov();
  for (int j = 0; j < h; ++j) {
    a = g * a;
    r = g * r * g.transpose() + w;
    path.a.push_back(a);
    path.r.push_back(0.5 * (r + r.transpose()));
  }
  return path;
}

std::vector<StepForecast> forecast_h(const SvdState& state, const DlmSpec& spec, int h,
                                     double obs_variance, std::span<const RegressorMoments> future) {
  const Index k = spec.n_regressors();
  if (k > 0 && static_cast<int>(future.size()) < h) {
    throw DataError("forecast: regressor moments required for " + std::to_string(h) + " horizons");
  }
  const auto pos = regression_positions(spec);
  const StatePath path = propagate(state, spec, h);
  std::vector<StepForecast> out;
  for (int j = 0; j < h; ++j) {
    const Vector& a = path.a[static_cast<std::size_t>(j)];
    const Matrix& r = path.r[static_cast<std::size_t>(j)];
    StepForecast sf;
    Vector f;
    if (k > 0) {
      const auto& x = future[static_cast<std::size_t>(j)];
      if (x.mean.size() != k || x.cov.rows() != k || x.cov.cols() != k) {
        throw DataError("forecast: regressor moments have the wrong dimension");
      }
      f = design_vector(spec, &x.mean);
      Vector ab(k);
      Matrix rb(k, k);
      for (Index p = 0; p < k; ++p) {
        ab[p] = a[pos[static_cast<std::size_t>(p)]];
        for (Index c = 0; c < k; ++c) rb(p, c) = r(pos[static_cast<std::size_t>(p)], pos[static_cast<std::size_t>(c)]);
      }
      sf.coef_mean = ab.dot(x.cov * ab);
      sf.coef_trace = (rb.array() * x.cov.array()).sum();
    } else {
      f = design_vector(spec);
    }
    sf.f = f.dot(a);
    sf.state = f.dot(r * f);
    sf.obs = obs_variance;
    sf.q = std::max(sf.state + sf.coef_mean + sf.coef_trace + sf.obs, kMinForecastVariance);
    out.push_back(sf);
  }
  return out;
}

// ---------------------------------------------------------------------------

UnivariateDlm::UnivariateDlm(DlmSpec spec, SvdState state, VarianceState variance)
    : spec_(std::move(spec)), state_(std::move(state)), variance_(variance) {
  spec_.validate();
  if (state_.m.size() != spec_.dim()) throw DataError("DLM state dimension does not match its spec");
  g_ = system_matrix(spec_);
  ranges_ = spec_.block_ranges();
  for (const auto& b : spec_.blocks) discounts_.push_back(b.discount);
}

double UnivariateDlm::obs_variance() const {
  return spec_.learn_variance ? variance_.s() : spec_.fixed_variance;
}

StepForecast UnivariateDlm::step(std::optional<double> y, const Vector* regressors) {
  const SvdPrior prior = svd_predict(state_, g_, ranges_, discounts_);
  const Vector f = design_vector(spec_, regressors);
  const double v = obs_variance();
  StepForecast sf;
  sf.f = f.dot(prior.a);
  const Vector uf = prior.u.transpose() * f;
  sf.state = uf.dot(prior.s.array().square().matrix().cwiseProduct(uf));
  sf.obs = v;
  sf.q = std::max(sf.state + v, kMinForecastVariance);
  if (!y || !std::isfinite(*y)) {
    state_ = {prior.a, prior.u, prior.s};
    return sf;
  }
  const ScalarUpdate upd = svd_update(prior, f, *y, v);
  state_ = upd.post;
  if (spec_.learn_variance) variance_ = variance_update(variance_, upd.e, upd.q, spec_.variance_discount);
  return sf;
}

std::vector<StepForecast> UnivariateDlm::forecast(int h, std::span<const RegressorMoments> future) const {
  return forecast_h(state_, spec_, h, obs_variance(), future);
}

}  // namespace dhf
