#include "dhf/mrdlm.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "dhf/errors.hpp"

namespace dhf {

namespace {

Matrix sym_sqrt(const Matrix& a, bool inverse) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()));
  Vector lam = eig.eigenvalues().cwiseMax(0.0);
  const double floor = std::max(lam.maxCoeff(), 0.0) * 1e-14;
  if (inverse) {
    lam = lam.cwiseMax(floor > 0 ? floor : 1e-300).cwiseSqrt().cwiseInverse();
  } else {
    lam = lam.cwiseSqrt();
  }
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

DiscountProfile DiscountProfile::named(const std::string& name) {
  if (name == "fast") return {0.9, 0.95, 0.95, 0.97, 0.97, 0.99};
  if (name == "medium") return {0.95, 0.97, 0.97, 0.99, 0.99, 0.99};
  if (name == "slow") return {0.97, 0.99, 0.99, 0.995, 0.995, 0.99};
  if (name == "m5") return {0.99, 0.995, 0.995, 0.997, 0.997, 0.9997};
  throw DataError("unknown discount profile '" + name + "'");
}

MatrixVarianceState matrix_variance_update(const MatrixVarianceState& vs, const Vector& e,
                                           const Matrix& q, double delta) {
  const Matrix v_half = sym_sqrt(vs.v(), false);
  const Vector z = v_half * (sym_sqrt(q, true) * e);
  MatrixVarianceState out;
  out.n = delta * vs.n + 1.0;
  out.d = delta * vs.d + z * z.transpose();
  out.d = 0.5 * (out.d + out.d.transpose());
  return out;
}

DlmSpec factor_block_spec(const MrdlmConfig& cfg) {
  DlmSpec spec;
  spec.blocks.push_back(Block::trend(cfg.discounts.factor_trend));
  if (cfg.period >= 2) {
    spec.blocks.push_back(Block::seasonal(cfg.period, cfg.factor_harmonics, cfg.discounts.factor_seasonal));
  }
  spec.variance_discount = cfg.discounts.variance;
  return spec;
}

DlmSpec base_series_spec(const MrdlmConfig& cfg, int n_regressors) {
  DlmSpec spec;
  spec.blocks.push_back(Block::level(cfg.discounts.base_level));
  if (cfg.period >= 2) {
    spec.blocks.push_back(Block::seasonal(cfg.period, cfg.base_harmonics, cfg.discounts.base_seasonal));
  }
  if (n_regressors > 0) spec.blocks.push_back(Block::regression(n_regressors, cfg.discounts.base_regression));
  spec.variance_discount = cfg.discounts.variance;
  return spec;
}

InitialFit fit_initial_state(const DlmSpec& spec, const Eigen::Ref<const Vector>& y,
                             const Eigen::Ref<const Matrix>& x, double ridge) {
  const Index p = spec.dim();
  const Index t_rows = y.size();
  const Matrix g = system_matrix(spec);
  const Index k = spec.n_regressors();

  // Row t of the design maps the state at row 0 to the mean at row t.
  Matrix z(t_rows, p);
  Matrix power = Matrix::Identity(p, p);
  for (Index t = 0; t < t_rows; ++t) {
    Vector reg = k > 0 ? Vector(x.row(t).transpose()) : Vector();
    const Vector f = design_vector(spec, k > 0 ? &reg : nullptr);
    z.row(t) = f.transpose() * power;
    power = g * power;
  }
  std::vector<Index> rows;
  for (Index t = 0; t < t_rows; ++t)
    if (std::isfinite(y[t])) rows.push_back(t);
  const auto n_obs = static_cast<Index>(rows.size());

  InitialFit out;
  out.residuals = Vector::Constant(t_rows, std::numeric_limits<double>::quiet_NaN());
  Vector theta0 = Vector::Zero(p);
  Matrix ztz_inv = Matrix::Identity(p, p);
  double s = 1.0;
  if (n_obs > 0) {
    Matrix zo(n_obs, p);
    Vector yo(n_obs);
    for (Index r = 0; r < n_obs; ++r) {
      zo.row(r) = z.row(rows[static_cast<std::size_t>(r)]);
      yo[r] = y[rows[static_cast<std::size_t>(r)]];
    }
    Matrix ztz = zo.transpose() * zo;
    const double scale = std::max(ztz.trace() / static_cast<double>(p), 1e-12);
    ztz.diagonal().array() += ridge * scale;
    const auto ldlt = ztz.ldlt();
    theta0 = ldlt.solve(zo.transpose() * yo);
    ztz_inv = ldlt.solve(Matrix::Identity(p, p));
    const Vector res = yo - zo * theta0;
    for (Index r = 0; r < n_obs; ++r) out.residuals[rows[static_cast<std::size_t>(r)]] = res[r];
    const double dof = static_cast<double>(std::max<Index>(n_obs - p, 1));
    const double ms = yo.squaredNorm() / static_cast<double>(n_obs);
    s = std::max(res.squaredNorm() / dof, 1e-6 * std::max(ms, 1e-6));
  }
  out.variance = s;

  // Move the fitted state to the last row (G is the identity on regression
  // coefficients, so they are unchanged).
  Matrix last = Matrix::Identity(p, p);
  for (Index t = 1; t < t_rows; ++t) last = g * last;
  Vector m = last * theta0;

  // Posterior covariance of the ridge fit, carried to the last row.
  out.state = SvdState::from_cov(std::move(m), last * (s * ztz_inv) * last.transpose());
  return out;
}

Mrdlm Mrdlm::initialize(const MrdlmConfig& cfg, const Matrix& x, const Matrix& b) {
  if (x.rows() != b.rows()) throw DataError("factor and base panels have different lengths");
  if (x.cols() > cfg.max_factors) {
    throw DataError("too many factors: " + std::to_string(x.cols()) + " (cap " +
                    std::to_string(cfg.max_factors) + ")");
  }
  const Index t0 = std::min<Index>(std::max(cfg.init_window, 1), x.rows());
  if (t0 < 1) throw DataError("no rows available to initialize the model");
  if (!x.topRows(t0).allFinite()) throw DataError("factor series must be fully observed");

  Mrdlm mod;
  mod.cfg_ = cfg;
  mod.n_x_ = x.cols();

  // Factors: independent fits, stacked.
  const DlmSpec one = factor_block_spec(cfg);
  const Index pf = one.dim();
  Vector fm(pf * mod.n_x_);
  Vector fs(pf * mod.n_x_);
  Matrix resid(t0, mod.n_x_);
  for (Index j = 0; j < mod.n_x_; ++j) {
    const InitialFit fit = fit_initial_state(one, x.col(j).head(t0), Matrix(t0, 0), cfg.ridge);
    fm.segment(j * pf, pf) = fit.state.m;
    fs.segment(j * pf, pf) = fit.state.s;
    resid.col(j) = fit.residuals;
    for (const auto& blk : one.blocks) mod.factor_spec_.blocks.push_back(blk);
  }
  mod.factor_spec_.variance_discount = cfg.discounts.variance;
  mod.factor_state_ = {fm, Matrix::Identity(fm.size(), fm.size()), fs};
  Matrix v0 = Matrix::Identity(mod.n_x_, mod.n_x_);
  if (mod.n_x_ > 0) {
    const double dof = static_cast<double>(std::max<Index>(t0 - pf, 1));
    v0 = resid.transpose() * resid / dof;
    const double jitter = 1e-8 * std::max(v0.trace() / static_cast<double>(mod.n_x_), 1e-12);
    v0.diagonal().array() += jitter;
  }
  mod.factor_var_ = {1.0, v0};

  // Base series.
  const Index nb = b.cols();
  mod.subsets_.resize(static_cast<std::size_t>(nb));
  for (Index i = 0; i < nb; ++i) {
    auto& sub = mod.subsets_[static_cast<std::size_t>(i)];
    if (static_cast<Index>(cfg.factor_subsets.size()) > i && !cfg.factor_subsets[static_cast<std::size_t>(i)].empty()) {
      sub = cfg.factor_subsets[static_cast<std::size_t>(i)];
      for (Index j : sub)
        if (j < 0 || j >= mod.n_x_) throw DataError("factor subset refers to a missing factor");
    } else {
      sub.resize(static_cast<std::size_t>(mod.n_x_));
      std::iota(sub.begin(), sub.end(), Index{0});
    }
  }
  mod.base_.resize(static_cast<std::size_t>(nb));
  for_each_index(default_exec(), nb, [&](Index i) {
    const auto& sub = mod.subsets_[static_cast<std::size_t>(i)];
    const DlmSpec spec = base_series_spec(cfg, static_cast<int>(sub.size()));
    Matrix xs(t0, static_cast<Index>(sub.size()));
    for (std::size_t c = 0; c < sub.size(); ++c) xs.col(static_cast<Index>(c)) = x.col(sub[c]).head(t0);
    const InitialFit fit = fit_initial_state(spec, b.col(i).head(t0), xs, cfg.ridge);
    mod.base_[static_cast<std::size_t>(i)] = UnivariateDlm(spec, fit.state, {1.0, fit.variance});
  });
  mod.prepare();
  return mod;
}

Mrdlm Mrdlm::from_parts(MrdlmConfig cfg, DlmSpec factor_spec, std::vector<DlmSpec> base_specs,
                        SvdState factor_state, MatrixVarianceState factor_variance,
                        std::vector<std::vector<Index>> factor_subsets,
                        std::vector<SvdState> base_states, std::vector<VarianceState> base_variances,
                        long steps) {
  if (base_specs.size() != base_states.size() || base_states.size() != base_variances.size() ||
      factor_subsets.size() != base_states.size()) {
    throw DataError("MRDLM parts have inconsistent sizes");
  }
  Mrdlm mod;
  mod.cfg_ = std::move(cfg);
  mod.n_x_ = factor_variance.d.rows();
  mod.factor_spec_ = std::move(factor_spec);
  mod.factor_state_ = std::move(factor_state);
  mod.factor_var_ = std::move(factor_variance);
  mod.subsets_ = std::move(factor_subsets);
  for (std::size_t i = 0; i < base_specs.size(); ++i) {
    mod.base_.emplace_back(std::move(base_specs[i]), std::move(base_states[i]), base_variances[i]);
  }
  mod.steps_ = steps;
  mod.prepare();
  return mod;
}

void Mrdlm::prepare() {
  if (n_x_ > 0) {
    factor_spec_.validate();
    if (factor_spec_.dim() % n_x_ != 0) throw DataError("factor state dimension is not a multiple of n_x");
  }
  factor_g_ = system_matrix(factor_spec_);
  factor_ranges_ = factor_spec_.block_ranges();
  factor_discounts_.clear();
  for (const auto& blk : factor_spec_.blocks) factor_discounts_.push_back(blk.discount);
}

Matrix Mrdlm::factor_design() const {
  const Index p = factor_spec_.dim();
  Matrix f = Matrix::Zero(p, n_x_);
  if (n_x_ == 0) return f;
  const Index pf = p / n_x_;
  // Every factor shares the same block layout.
  DlmSpec one;
  one.blocks.assign(factor_spec_.blocks.begin(),
                    factor_spec_.blocks.begin() + static_cast<long>(factor_spec_.blocks.size() / static_cast<std::size_t>(n_x_)));
  const Vector f1 = design_vector(one);
  for (Index j = 0; j < n_x_; ++j) f.block(j * pf, j, pf, 1) = f1;
  return f;
}

void Mrdlm::update(const Vector& x, const Vector& b, Exec exec) {
  if (x.size() != n_x_ || b.size() != n_base()) throw DataError("MRDLM update: observation size mismatch");
  if (!x.allFinite()) throw DataError("factor observations must be fully observed");
  if (n_x_ > 0) {
    const SvdPrior prior = svd_predict(factor_state_, factor_g_, factor_ranges_, factor_discounts_);
    const Matrix v = factor_var_.v();
    const MultiUpdate upd = svd_update(prior, factor_design(), x, v);
    factor_state_ = upd.post;
    factor_var_ = matrix_variance_update(factor_var_, upd.e, upd.q, factor_spec_.variance_discount);
  }
  for_each_index(exec, n_base(), [&](Index i) {
    const auto& sub = subsets_[static_cast<std::size_t>(i)];
    Vector reg(static_cast<Index>(sub.size()));
    for (std::size_t c = 0; c < sub.size(); ++c) reg[static_cast<Index>(c)] = x[sub[c]];
    std::optional<double> y;
    if (std::isfinite(b[i])) y = b[i];
    base_[static_cast<std::size_t>(i)].step(y, sub.empty() ? nullptr : &reg);
  });
  ++steps_;
}

std::vector<FactorForecast> Mrdlm::factor_forecast(int h) const {
  std::vector<FactorForecast> out;
  if (n_x_ == 0) {
    out.assign(static_cast<std::size_t>(h), {Vector(0), Matrix(0, 0)});
    return out;
  }
  const StatePath path = propagate(factor_state_, factor_spec_, h);
  const Matrix f = factor_design();
  const Matrix v = factor_var_.v();
  for (int j = 0; j < h; ++j) {
    FactorForecast ff;
    ff.mean = f.transpose() * path.a[static_cast<std::size_t>(j)];
    ff.cov = f.transpose() * path.r[static_cast<std::size_t>(j)] * f + v;
    ff.cov = 0.5 * (ff.cov + ff.cov.transpose());
    out.push_back(std::move(ff));
  }
  return out;
}

std::vector<GaussianFactorMoments> Mrdlm::assemble_prior(int h, Exec exec) const {
  if (h < 1) throw DataError("forecast horizon must be at least 1");
  const auto ff = factor_forecast(h);
  const Index nb = n_base();
  std::vector<GaussianFactorMoments> out(static_cast<std::size_t>(h));
  for (int j = 0; j < h; ++j) {
    auto& pm = out[static_cast<std::size_t>(j)];
    pm.mean.resize(nb);
    pm.loadings = Matrix::Zero(nb, n_x_);
    pm.factor_cov = ff[static_cast<std::size_t>(j)].cov;
    pm.specific.resize(nb);
  }
  for_each_index(exec, nb, [&](Index i) {
    const auto& sub = subsets_[static_cast<std::size_t>(i)];
    const auto k = static_cast<Index>(sub.size());
    const auto& model = base_[static_cast<std::size_t>(i)];
    std::vector<RegressorMoments> future;
    if (k > 0) {
      for (int j = 0; j < h; ++j) {
        const auto& fj = ff[static_cast<std::size_t>(j)];
        RegressorMoments rm{Vector(k), Matrix(k, k)};
        for (Index a = 0; a < k; ++a) {
          rm.mean[a] = fj.mean[sub[static_cast<std::size_t>(a)]];
          for (Index c = 0; c < k; ++c) rm.cov(a, c) = fj.cov(sub[static_cast<std::size_t>(a)], sub[static_cast<std::size_t>(c)]);
        }
        future.push_back(std::move(rm));
      }
    }
    const auto fc = model.forecast(h, future);
    const Index off = model.spec().regression_offset();
    for (int j = 0; j < h; ++j) {
      auto& pm = out[static_cast<std::size_t>(j)];
      const auto& sf = fc[static_cast<std::size_t>(j)];
      pm.mean[i] = sf.f;
      pm.specific[i] = sf.state + sf.coef_trace + sf.obs;
      for (Index a = 0; a < k; ++a) pm.loadings(i, sub[static_cast<std::size_t>(a)]) = model.state().m[off + a];
    }
  });
  return out;
}

}  // namespace dhf
