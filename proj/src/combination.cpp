#include "dhf/combination.hpp"

#include <cmath>

#include "dhf/errors.hpp"

namespace dhf {

namespace {

double nu_scale(double nu) {
  if (std::isinf(nu)) return 1.0;
  if (!(nu > 2.0)) throw NumericalError("combination forecast needs nu > 2");
  return nu / (nu - 2.0);
}

void check_caps(const WeightLayout& layout, Index cap) {
  if (layout.n_base() > cap || layout.dim > 4 * cap) {
    throw NumericalError("combination over " + std::to_string(layout.n_base()) + " series (" +
                         std::to_string(layout.dim) + " weights) exceeds the dense cap of " +
                         std::to_string(cap) + "; use the two-step scheme");
  }
}

double slot_divisor(const CombinationConfig& cfg, const std::string& slot) {
  const auto hash = slot.find('#');
  const std::string level = hash == std::string::npos ? slot : slot.substr(0, hash);
  auto it = cfg.level_divisors.find(level);
  return it == cfg.level_divisors.end() ? cfg.divisor : it->second;
}

// Predictive quantities on the observed base rows.
struct Predictive {
  std::vector<Index> rows;
  Vector e;
  Matrix q;
  Matrix rxt;  // R X' restricted to observed rows (dim x n_obs)
};

Predictive predictive(const WeightLayout& lay, const PanelDesign& d, const GaussianFactorMoments& prior,
                      const Vector& a, const Matrix& r, const Vector& b) {
  Predictive p;
  for (Index i = 0; i < lay.n_base(); ++i)
    if (std::isfinite(b[i])) p.rows.push_back(i);
  const auto n = static_cast<Index>(p.rows.size());
  p.e.resize(n);
  p.rxt = Matrix::Zero(lay.dim, n);
  Vector extra(n);
  for (Index c = 0; c < n; ++c) {
    const Index i = p.rows[static_cast<std::size_t>(c)];
    const Index off = lay.offset[static_cast<std::size_t>(i)];
    const Index k = lay.k(i);
    const auto xi = d.x.segment(off, k);
    const auto hi = d.h.segment(off, k);
    p.e[c] = b[i] - d.base[i] - xi.dot(a.segment(off, k));
    p.rxt.col(c) = r.middleCols(off, k) * xi;
    extra[c] = (a.segment(off, k).array().square() * hi.array()).sum() +
               (r.diagonal().segment(off, k).array() * hi.array()).sum();
  }
  // X R X'.
  p.q.resize(n, n);
  for (Index c = 0; c < n; ++c) {
    const Index i = p.rows[static_cast<std::size_t>(c)];
    const Index off = lay.offset[static_cast<std::size_t>(i)];
    p.q.row(c) = d.x.segment(off, lay.k(i)).transpose() * p.rxt.middleRows(off, lay.k(i));
  }
  Matrix lo(n, prior.n_factors());
  Vector spec(n);
  for (Index c = 0; c < n; ++c) {
    lo.row(c) = prior.loadings.row(p.rows[static_cast<std::size_t>(c)]);
    spec[c] = prior.specific[p.rows[static_cast<std::size_t>(c)]];
  }
  p.q += lo * prior.factor_cov * lo.transpose();
  p.q.diagonal() += spec + extra;
  p.q = 0.5 * (p.q + p.q.transpose());
  return p;
}

Eigen::LDLT<Matrix> factor_predictive(const Matrix& q) {
  Eigen::LDLT<Matrix> ldlt(q);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) {
    // Retry with a small jitter before giving up.
    Matrix qj = q;
    const double jitter = 1e-10 * std::max(q.diagonal().mean(), 1e-300);
    qj.diagonal().array() += jitter;
    ldlt.compute(qj);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) {
      throw NumericalError("combination: singular forecast covariance");
    }
  }
  return ldlt;
}

}  // namespace

WeightPrior init_weight_prior(Index k, double divisor) {
  if (k <= 0) throw DataError("weight prior needs at least one regressor");
  if (!(divisor > 0.0)) throw DataError("weight prior divisor must be positive");
  const double sd = 1.0 / (divisor * static_cast<double>(k));
  return {Vector::Zero(k), Vector::Constant(k, sd * sd)};
}

WeightLayout WeightLayout::from_slots(std::vector<std::string> names, std::vector<std::vector<Index>> slots) {
  WeightLayout lay;
  lay.slot_names = std::move(names);
  lay.slots = std::move(slots);
  for (std::size_t i = 0; i < lay.slots.size(); ++i) {
    lay.offset.push_back(lay.dim);
    for (Index s : lay.slots[i]) {
      if (s < 0 || s >= lay.n_slots()) throw DataError("weight layout refers to a missing slot");
      lay.position_series.push_back(static_cast<Index>(i));
      lay.position_slot.push_back(s);
    }
    lay.dim += static_cast<Index>(lay.slots[i].size());
  }
  return lay;
}

WeightLayout WeightLayout::from_panel(const RegressorPanel& panel) {
  std::vector<std::vector<Index>> slots(static_cast<std::size_t>(panel.n_base()));
  for (Index i = 0; i < panel.n_base(); ++i) slots[static_cast<std::size_t>(i)] = panel.active(i);
  return from_slots(panel.slot_names, std::move(slots));
}

PanelDesign panel_design(const WeightLayout& layout, const RegressorPanel& panel, bool offset) {
  if (panel.n_base() != layout.n_base()) throw DataError("panel and weight layout disagree on n_b");
  PanelDesign d;
  d.x = Vector::Zero(layout.dim);
  d.h = Vector::Zero(layout.dim);
  d.base = offset ? panel.prior_mean : Vector::Zero(layout.n_base());
  for (Index p = 0; p < layout.dim; ++p) {
    const Index i = layout.position_series[static_cast<std::size_t>(p)];
    const Index s = layout.position_slot[static_cast<std::size_t>(p)];
    if (s >= panel.n_slots() || !panel.has(i, s)) continue;
    d.x[p] = panel.mean(i, s) - (offset ? panel.prior_mean[i] : 0.0);
    d.h[p] = panel.var(i, s);
  }
  return d;
}

ReconciledForecast combine_moments(const WeightLayout& lay, const PanelDesign& d,
                                   const GaussianFactorMoments& prior, const Vector& m,
                                   const Matrix& r, double nu) {
  const double c = nu_scale(nu);
  const Index nb = lay.n_base();
  ReconciledForecast out;
  out.mean = d.base;
  Vector mhm(nb), trh(nb);
  Matrix rxt = Matrix::Zero(lay.dim, nb);
  for (Index i = 0; i < nb; ++i) {
    const Index off = lay.offset[static_cast<std::size_t>(i)];
    const Index k = lay.k(i);
    const auto xi = d.x.segment(off, k);
    const auto hi = d.h.segment(off, k);
    out.mean[i] += xi.dot(m.segment(off, k));
    mhm[i] = (m.segment(off, k).array().square() * hi.array()).sum();
    trh[i] = (r.diagonal().segment(off, k).array() * hi.array()).sum();
    rxt.col(i) = r.middleCols(off, k) * xi;
  }
  const Vector diag = c * (prior.specific + trh) + (1.0 - c) * mhm;
  std::vector<CovBlock> blocks;
  if (lay.dim > 0) {
    Matrix xrx(nb, nb);
    for (Index i = 0; i < nb; ++i) {
      const Index off = lay.offset[static_cast<std::size_t>(i)];
      xrx.row(i) = d.x.segment(off, lay.k(i)).transpose() * rxt.middleRows(off, lay.k(i));
    }
    CovBlock blk;
    blk.index.resize(static_cast<std::size_t>(nb));
    for (Index i = 0; i < nb; ++i) blk.index[static_cast<std::size_t>(i)] = i;
    blk.cov = c * 0.5 * (xrx + xrx.transpose());
    blk.cov.diagonal() += diag;
    blocks.push_back(std::move(blk));
  }
  out.cov = StructuredCovariance(prior.loadings, c * prior.factor_cov, diag, std::move(blocks));
  return out;
}

// ---------------------------------------------------------------------------

FlatCombination::FlatCombination(WeightLayout layout, CombinationConfig cfg)
    : layout_(std::move(layout)), cfg_(std::move(cfg)) {
  if (!(cfg_.discount > 0.0 && cfg_.discount <= 1.0)) throw DataError("weight discount must lie in (0, 1]");
  check_caps(layout_, cfg_.dense_cap);
  m_ = Vector::Zero(layout_.dim);
  Vector var(layout_.dim);
  for (Index i = 0; i < layout_.n_base(); ++i) {
    const Index k = layout_.k(i);
    for (Index a = 0; a < k; ++a) {
      const Index s = layout_.slots[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
      const double div = slot_divisor(cfg_, layout_.slot_names[static_cast<std::size_t>(s)]);
      var[layout_.offset[static_cast<std::size_t>(i)] + a] = init_weight_prior(k, div).var[0];
    }
  }
  c_ = var.asDiagonal();
}

void FlatCombination::set_state(Vector m, Matrix c) {
  if (m.size() != layout_.dim || c.rows() != layout_.dim || c.cols() != layout_.dim) {
    throw DataError("combination state has the wrong dimension");
  }
  m_ = std::move(m);
  c_ = std::move(c);
}

void FlatCombination::update(const RegressorPanel& panel, const GaussianFactorMoments& prior, const Vector& b) {
  if (b.size() != layout_.n_base() || prior.n_base() != layout_.n_base()) {
    throw DataError("combination update: size mismatch");
  }
  const PanelDesign d = panel_design(layout_, panel, cfg_.offset);
  const Matrix r = c_ / cfg_.discount;
  const Predictive p = predictive(layout_, d, prior, m_, r, b);
  ++updates_;
  if (p.rows.empty()) {
    c_ = r;
    return;
  }
  const auto ldlt = factor_predictive(p.q);
  const Matrix gain_t = ldlt.solve(p.rxt.transpose());  // Q^{-1} X R
  m_ += gain_t.transpose() * p.e;
  c_ = r - p.rxt * gain_t;
  c_ = 0.5 * (c_ + c_.transpose());
}

ReconciledForecast FlatCombination::forecast(const RegressorPanel& panel, const GaussianFactorMoments& prior,
                                             int steps) const {
  if (steps < 1) throw DataError("forecast steps must be at least 1");
  const PanelDesign d = panel_design(layout_, panel, cfg_.offset);
  const double grow = 1.0 + steps * (1.0 - cfg_.discount) / cfg_.discount;
  return combine_moments(layout_, d, prior, m_, c_ * grow, cfg_.nu);
}

std::vector<WeightRecord> FlatCombination::weights() const {
  std::vector<WeightRecord> out;
  for (Index p = 0; p < layout_.dim; ++p) {
    out.push_back({layout_.position_series[static_cast<std::size_t>(p)],
                   layout_.slot_names[static_cast<std::size_t>(layout_.position_slot[static_cast<std::size_t>(p)])],
                   m_[p], std::sqrt(std::max(c_(p, p), 0.0))});
  }
  return out;
}

// ---------------------------------------------------------------------------

HierCombination::HierCombination(WeightLayout layout, CombinationConfig cfg)
    : layout_(std::move(layout)), cfg_(std::move(cfg)) {
  Vector v(layout_.dim);
  for (Index i = 0; i < layout_.n_base(); ++i) {
    const Index k = layout_.k(i);
    if (k == 0) continue;
    const double var = init_weight_prior(k, cfg_.deviation_divisor).var[0];
    v.segment(layout_.offset[static_cast<std::size_t>(i)], k).setConstant(var);
  }
  *this = HierCombination(layout_, cfg_, v);
}

HierCombination::HierCombination(WeightLayout layout, CombinationConfig cfg, Vector deviation_var)
    : layout_(std::move(layout)), cfg_(std::move(cfg)), v_(std::move(deviation_var)) {
  if (!(cfg_.discount > 0.0 && cfg_.discount <= 1.0)) throw DataError("weight discount must lie in (0, 1]");
  if (v_.size() != layout_.dim || (v_.size() > 0 && v_.minCoeff() < 0.0)) {
    throw DataError("deviation variances must be nonnegative, one per weight");
  }
  check_caps(layout_, cfg_.dense_cap);
  const Index ks = layout_.n_slots();
  mh_ = Vector::Zero(ks);
  Vector var(ks);
  for (Index s = 0; s < ks; ++s) {
    var[s] = init_weight_prior(ks, slot_divisor(cfg_, layout_.slot_names[static_cast<std::size_t>(s)])).var[0];
  }
  ch_ = var.asDiagonal();
  const Matrix fh = selection();
  mb_ = fh * mh_;
  cb_ = fh * ch_ * fh.transpose();
  cb_.diagonal() += v_;
}

Matrix HierCombination::selection() const {
  Matrix fh = Matrix::Zero(layout_.dim, layout_.n_slots());
  for (Index p = 0; p < layout_.dim; ++p) fh(p, layout_.position_slot[static_cast<std::size_t>(p)]) = 1.0;
  return fh;
}

void HierCombination::set_state(Vector mh, Matrix ch, Vector mb, Matrix cb) {
  if (mh.size() != layout_.n_slots() || ch.rows() != mh.size() || mb.size() != layout_.dim ||
      cb.rows() != layout_.dim) {
    throw DataError("pooled combination state has the wrong dimension");
  }
  mh_ = std::move(mh);
  ch_ = std::move(ch);
  mb_ = std::move(mb);
  cb_ = std::move(cb);
}

void HierCombination::update(const RegressorPanel& panel, const GaussianFactorMoments& prior, const Vector& b) {
  if (b.size() != layout_.n_base() || prior.n_base() != layout_.n_base()) {
    throw DataError("combination update: size mismatch");
  }
  const PanelDesign d = panel_design(layout_, panel, cfg_.offset);
  const Matrix fh = selection();
  const Vector ah = mh_;
  const Matrix rh = ch_ / cfg_.discount;
  const Vector ab = fh * ah;
  Matrix rb = fh * rh * fh.transpose();
  rb.diagonal() += v_;
  const Predictive p = predictive(layout_, d, prior, ab, rb, b);
  ++updates_;
  if (p.rows.empty()) {
    ch_ = rh;
    mb_ = ab;
    cb_ = rb;
    return;
  }
  // X_h = R_h F_h' X' = F_h' (F_h R_h F_h') X' restricted; computed directly.
  const auto n = static_cast<Index>(p.rows.size());
  Matrix fx = Matrix::Zero(layout_.n_slots(), n);  // F_h' X'
  for (Index c = 0; c < n; ++c) {
    const Index i = p.rows[static_cast<std::size_t>(c)];
    const Index off = layout_.offset[static_cast<std::size_t>(i)];
    for (Index a = 0; a < layout_.k(i); ++a) fx(layout_.position_slot[static_cast<std::size_t>(off + a)], c) += d.x[off + a];
  }
  const Matrix xh = rh * fx;
  const auto ldlt = factor_predictive(p.q);
  const Matrix gh = ldlt.solve(xh.transpose());
  const Matrix gb = ldlt.solve(p.rxt.transpose());
  mh_ = ah + gh.transpose() * p.e;
  ch_ = rh - xh * gh;
  ch_ = 0.5 * (ch_ + ch_.transpose());
  mb_ = ab + gb.transpose() * p.e;
  cb_ = rb - p.rxt * gb;
  cb_ = 0.5 * (cb_ + cb_.transpose());
}

ReconciledForecast HierCombination::forecast(const RegressorPanel& panel, const GaussianFactorMoments& prior,
                                             int steps) const {
  if (steps < 1) throw DataError("forecast steps must be at least 1");
  const PanelDesign d = panel_design(layout_, panel, cfg_.offset);
  const Matrix fh = selection();
  const double extra = steps * (1.0 - cfg_.discount) / cfg_.discount;
  const Matrix r = cb_ + extra * (fh * ch_ * fh.transpose());
  return combine_moments(layout_, d, prior, mb_, r, cfg_.nu);
}

std::vector<WeightRecord> HierCombination::weights() const {
  std::vector<WeightRecord> out;
  for (Index p = 0; p < layout_.dim; ++p) {
    out.push_back({layout_.position_series[static_cast<std::size_t>(p)],
                   layout_.slot_names[static_cast<std::size_t>(layout_.position_slot[static_cast<std::size_t>(p)])],
                   mb_[p], std::sqrt(std::max(cb_(p, p), 0.0))});
  }
  return out;
}

}  // namespace dhf
