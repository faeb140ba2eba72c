#include "dhf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dhf/errors.hpp"

namespace dhf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::pair<Method, std::string>>& method_table() {
  static const std::vector<std::pair<Method, std::string>> t = {
      {Method::bu_diag, "bu-diag"},     {Method::bu_shrink, "bu-shrink"},   {Method::mint_ols, "mint-ols"},
      {Method::mint_wls, "mint-wls"},   {Method::mint_shrink, "mint-shrink"}, {Method::mrdlm, "mrdlm"},
      {Method::dhf, "dhf"},             {Method::dhf_2step, "dhf-2step"},   {Method::dhf_hier, "dhf-hier"}};
  return t;
}

}  // namespace

const std::string& method_name(Method m) {
  for (const auto& [k, v] : method_table())
    if (k == m) return v;
  throw DataError("unknown method");
}

Method parse_method(const std::string& name) {
  for (const auto& [k, v] : method_table())
    if (v == name) return k;
  throw DataError("unknown method '" + name + "'");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> all = [] {
    std::vector<Method> v;
    for (const auto& kv : method_table()) v.push_back(kv.first);
    return v;
  }();
  return all;
}

// ---------------------------------------------------------------------------

CombinationModel::CombinationModel(WeightLayout layout, const CombinationConfig& cfg, bool pooled)
    : pooled_(pooled) {
  if (pooled) hier_ = HierCombination(std::move(layout), cfg);
  else flat_ = FlatCombination(std::move(layout), cfg);
}

void CombinationModel::update(const RegressorPanel& panel, const GaussianFactorMoments& prior, const Vector& b) {
  if (pooled_) hier_.update(panel, prior, b);
  else flat_.update(panel, prior, b);
}

ReconciledForecast CombinationModel::forecast(const RegressorPanel& panel, const GaussianFactorMoments& prior,
                                              int steps) const {
  return pooled_ ? hier_.forecast(panel, prior, steps) : flat_.forecast(panel, prior, steps);
}

std::vector<WeightRecord> CombinationModel::weights() const {
  return pooled_ ? hier_.weights() : flat_.weights();
}

// ---------------------------------------------------------------------------

Reconciler::Reconciler(const Hierarchy& h, ReconcilerConfig cfg) : h_(&h), cfg_(std::move(cfg)) {
  full_layout_ = slot_layout(h);
  two_step_ = !cfg_.boundary_level.empty();
  if (two_step_) {
    part_ = dhf::partition(h, cfg_.boundary_level, cfg_.assignment_overrides);
    if (part_.degenerate) two_step_ = false;
  }
  if (!two_step_) {
    models_.resize(1);
    return;
  }
  upper_layout_ = slot_layout(part_.upper);
  lower_names_.push_back(cfg_.boundary_level);
  for (Index s = 0; s < full_layout_.size(); ++s) {
    const auto& lvl = full_layout_.levels[static_cast<std::size_t>(s)];
    auto it = part_.forecast_assignment.find(lvl);
    if (it != part_.forecast_assignment.end() && it->second == Side::lower && lvl != cfg_.boundary_level) {
      lower_slots_.push_back(s);
      lower_names_.push_back(full_layout_.names[static_cast<std::size_t>(s)]);
    }
  }
  const Index nl = static_cast<Index>(part_.lowers.size());
  upper_index_.assign(static_cast<std::size_t>(h.size()), -1);
  for (std::size_t k = 0; k < part_.upper_series.size(); ++k) {
    upper_index_[static_cast<std::size_t>(part_.upper_series[k])] = static_cast<Index>(k);
  }
  upper_to_lower_.assign(static_cast<std::size_t>(part_.upper.n_base()), -1);
  for (Index l = 0; l < nl; ++l) {
    const auto& series = part_.lower_series[static_cast<std::size_t>(l)];
    Index root = -1;
    for (std::size_t k = 0; k < series.size(); ++k) {
      if (h.level(series[k]) == cfg_.boundary_level && upper_index_[static_cast<std::size_t>(series[k])] >= 0) {
        root = static_cast<Index>(k);
        const Index u = upper_index_[static_cast<std::size_t>(series[k])] - part_.upper.n_aggregates();
        upper_to_lower_[static_cast<std::size_t>(u)] = l;
        break;
      }
    }
    if (root < 0) throw DataError("partition: lower sub-hierarchy without a boundary node");
    lower_root_.push_back(root);
  }
  models_.resize(static_cast<std::size_t>(nl) + 1);
}

GaussianFactorMoments Reconciler::upper_prior(const GaussianFactorMoments& prior) const {
  const Index nu = part_.upper.n_base();
  GaussianFactorMoments up;
  up.mean = Vector::Zero(nu);
  up.loadings = Matrix::Zero(nu, prior.n_factors());
  up.factor_cov = prior.factor_cov;
  up.specific = Vector::Zero(nu);
  for (Index u = 0; u < nu; ++u) {
    const Index l = upper_to_lower_[static_cast<std::size_t>(u)];
    for (Index j : part_.lower_base[static_cast<std::size_t>(l)]) {
      up.mean[u] += prior.mean[j];
      up.loadings.row(u) += prior.loadings.row(j);
      up.specific[u] += prior.specific[j];
    }
  }
  return up;
}

void Reconciler::build_records(const GaussianFactorMoments& prior, std::span<const ExoValue> exo,
                               ForecastRecord& rec) const {
  rec.prior = prior;
  if (!two_step_) {
    rec.panel = build_regressors(prior, exo, *h_, full_layout_, Exec::serial);
    return;
  }
  std::vector<ExoValue> lower_exo, upper_exo;
  for (const auto& e : exo) {
    const auto it = part_.forecast_assignment.find(h_->level(e.series));
    const bool up = it != part_.forecast_assignment.end() && it->second == Side::upper;
    if (up) {
      const Index u = upper_index_[static_cast<std::size_t>(e.series)];
      if (u < 0) throw DataError("forecast for '" + h_->id(e.series) + "' assigned to the upper sub-hierarchy");
      upper_exo.push_back({u, e.mean, e.variance});
    } else if (h_->level(e.series) != cfg_.boundary_level) {
      lower_exo.push_back(e);
    }
  }
  rec.panel = build_regressors(prior, lower_exo, *h_, full_layout_, Exec::serial);
  rec.upper_prior = upper_prior(prior);
  rec.upper_panel = build_regressors(rec.upper_prior, upper_exo, part_.upper, upper_layout_, Exec::serial);
}

CombinationModel& Reconciler::model(std::size_t k, const RegressorPanel& panel, const CombinationConfig& cfg,
                                    bool pooled) {
  auto& slot = models_[k];
  if (!slot) slot.emplace(WeightLayout::from_panel(panel), cfg, pooled);
  return *slot;
}

ReconciledForecast Reconciler::forecast(const GaussianFactorMoments& prior, std::span<const ExoValue> exo,
                                        int steps, ForecastRecord* record, Exec exec) {
  if (prior.n_base() != h_->n_base()) throw DataError("reconcile: prior does not match the hierarchy");
  ForecastRecord local;
  ForecastRecord& rec = record ? *record : local;
  build_records(prior, exo, rec);
  if (!two_step_) {
    return model(0, rec.panel, cfg_.upper, cfg_.pooled).forecast(rec.panel, prior, steps);
  }

  // Upper sub-hierarchy over the boundary series.
  const ReconciledForecast up =
      model(0, rec.upper_panel, cfg_.upper, false).forecast(rec.upper_panel, rec.upper_prior, steps);
  const Vector up_var = up.cov.variances();

  // Lower sub-hierarchies, each fed the reconciled boundary forecast.
  const Index nl = static_cast<Index>(part_.lowers.size());
  rec.lower_priors.assign(static_cast<std::size_t>(nl), {});
  rec.lower_panels.assign(static_cast<std::size_t>(nl), {});
  std::vector<Index> lower_up(static_cast<std::size_t>(nl), -1);
  for (std::size_t u = 0; u < upper_to_lower_.size(); ++u) lower_up[static_cast<std::size_t>(upper_to_lower_[u])] = static_cast<Index>(u);
  for (Index l = 0; l < nl; ++l) {
    if (!models_[static_cast<std::size_t>(l) + 1]) {
      // Layouts are created serially; the parallel loop below only reads them.
      const auto& base = part_.lower_base[static_cast<std::size_t>(l)];
      std::vector<std::vector<Index>> slots(base.size());
      for (std::size_t r = 0; r < base.size(); ++r) {
        slots[r].push_back(0);
        for (std::size_t s = 0; s < lower_slots_.size(); ++s)
          if (rec.panel.has(base[r], lower_slots_[s])) slots[r].push_back(static_cast<Index>(s) + 1);
      }
      models_[static_cast<std::size_t>(l) + 1].emplace(WeightLayout::from_slots(lower_names_, std::move(slots)),
                                                       cfg_.lower, cfg_.pooled);
    }
  }
  std::vector<ReconciledForecast> lows(static_cast<std::size_t>(nl));
  for_each_index(exec, nl, [&](Index l) {
    const auto& base = part_.lower_base[static_cast<std::size_t>(l)];
    auto& lp = rec.lower_priors[static_cast<std::size_t>(l)];
    lp = prior.restrict(base);
    RegressorPanel& panel = rec.lower_panels[static_cast<std::size_t>(l)];
    panel.slot_names = lower_names_;
    panel.prior_mean = lp.mean;
    panel.mean = Matrix::Constant(lp.n_base(), static_cast<Index>(lower_names_.size()), kNaN);
    panel.var = panel.mean;
    for (std::size_t r = 0; r < base.size(); ++r) {
      for (std::size_t s = 0; s < lower_slots_.size(); ++s) {
        panel.mean(static_cast<Index>(r), static_cast<Index>(s) + 1) = rec.panel.mean(base[r], lower_slots_[s]);
        panel.var(static_cast<Index>(r), static_cast<Index>(s) + 1) = rec.panel.var(base[r], lower_slots_[s]);
      }
    }
    const Index u = lower_up[static_cast<std::size_t>(l)];
    add_regressor(panel, lp, part_.lowers[static_cast<std::size_t>(l)], lower_root_[static_cast<std::size_t>(l)], 0,
                  up.mean[u], up_var[u]);
    lows[static_cast<std::size_t>(l)] = models_[static_cast<std::size_t>(l) + 1]->forecast(panel, lp, steps);
  });

  // Assemble: common factor part plus one residual block per lower.
  const Index nb = h_->n_base();
  ReconciledForecast out;
  out.mean.resize(nb);
  Vector diag(nb);
  std::vector<CovBlock> blocks;
  Matrix factor_cov = prior.factor_cov;
  for (Index l = 0; l < nl; ++l) {
    const auto& base = part_.lower_base[static_cast<std::size_t>(l)];
    const auto& lf = lows[static_cast<std::size_t>(l)];
    if (l == 0) factor_cov = lf.cov.factor_cov();
    for (std::size_t r = 0; r < base.size(); ++r) {
      out.mean[base[r]] = lf.mean[static_cast<Index>(r)];
      diag[base[r]] = lf.cov.diag()[static_cast<Index>(r)];
    }
    for (const auto& blk : lf.cov.blocks()) {
      CovBlock mapped;
      for (Index r : blk.index) mapped.index.push_back(base[static_cast<std::size_t>(r)]);
      mapped.cov = blk.cov;
      blocks.push_back(std::move(mapped));
    }
  }
  out.cov = StructuredCovariance(prior.loadings, factor_cov, diag, std::move(blocks));
  return out;
}

void Reconciler::update(const ForecastRecord& rec, const Vector& b, Exec exec) {
  if (b.size() != h_->n_base()) throw DataError("reconcile update: outcome size mismatch");
  if (!two_step_) {
    model(0, rec.panel, cfg_.upper, cfg_.pooled).update(rec.panel, rec.prior, b);
    return;
  }
  const Index nu = part_.upper.n_base();
  Vector bu(nu);
  for (Index u = 0; u < nu; ++u) {
    double s = 0.0;
    for (Index j : part_.lower_base[static_cast<std::size_t>(upper_to_lower_[static_cast<std::size_t>(u)])]) s += b[j];
    bu[u] = s;  // NaN propagates
  }
  model(0, rec.upper_panel, cfg_.upper, false).update(rec.upper_panel, rec.upper_prior, bu);
  const Index nl = static_cast<Index>(part_.lowers.size());
  if (static_cast<Index>(rec.lower_panels.size()) != nl) throw DataError("reconcile update: record lacks lowers");
  for_each_index(exec, nl, [&](Index l) {
    const auto& base = part_.lower_base[static_cast<std::size_t>(l)];
    Vector bl(static_cast<Index>(base.size()));
    for (std::size_t r = 0; r < base.size(); ++r) bl[static_cast<Index>(r)] = b[base[r]];
    models_[static_cast<std::size_t>(l) + 1]->update(rec.lower_panels[static_cast<std::size_t>(l)],
                                                     rec.lower_priors[static_cast<std::size_t>(l)], bl);
  });
}

std::vector<WeightRecord> Reconciler::weights() const {
  std::vector<WeightRecord> out;
  if (!two_step_) {
    if (models_[0]) {
      for (auto w : models_[0]->weights()) {
        w.series = h_->base_series(w.series);
        out.push_back(w);
      }
    }
    return out;
  }
  if (models_[0]) {
    for (auto w : models_[0]->weights()) {
      // Upper weights belong to the boundary series.
      w.series = part_.upper_series[static_cast<std::size_t>(part_.upper.n_aggregates() + w.series)];
      out.push_back(w);
    }
  }
  for (std::size_t l = 1; l < models_.size(); ++l) {
    if (!models_[l]) continue;
    const auto& base = part_.lower_base[l - 1];
    for (auto w : models_[l]->weights()) {
      w.series = h_->base_series(base[static_cast<std::size_t>(w.series)]);
      out.push_back(w);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Index> default_factors(const Hierarchy& h) {
  std::vector<Index> out;
  std::vector<char> has_parent(static_cast<std::size_t>(h.size()), 0);
  for (Index i = 0; i < h.n_aggregates(); ++i)
    for (Index c : h.children(i)) has_parent[static_cast<std::size_t>(c)] = 1;
  std::vector<char> chosen(static_cast<std::size_t>(h.size()), 0);
  for (Index i = 0; i < h.n_aggregates(); ++i) {
    if (has_parent[static_cast<std::size_t>(i)]) continue;
    for (Index c : h.children(i))
      if (!h.is_base(c)) chosen[static_cast<std::size_t>(c)] = 1;
  }
  for (Index i = 0; i < h.size(); ++i)
    if (chosen[static_cast<std::size_t>(i)]) out.push_back(i);
  // Two-level hierarchies: a base series can't be its own regressor, so the
  // roots serve as factors.
  if (out.empty())
    for (Index i = 0; i < h.n_aggregates(); ++i)
      if (!has_parent[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

Pipeline::Pipeline(const Hierarchy& h, PipelineConfig cfg) : h_(&h), cfg_(std::move(cfg)) {
  if (cfg_.horizon < 1) throw DataError("horizon must be at least 1");
  if (cfg_.factor_ids.empty()) {
    factors_ = default_factors(h);
  } else {
    for (const auto& id : cfg_.factor_ids) factors_.push_back(h.index_of(id));
  }
}

long Pipeline::initialize(const Matrix& y, long rows) {
  if (y.cols() != h_->size()) throw DataError("data panel does not cover every series");
  rows = std::min<long>(rows, static_cast<long>(y.rows()));
  if (rows < 1) throw DataError("no rows");
  const long t0 = std::min<long>(std::max(cfg_.mrdlm.init_window, 1), rows);
  Matrix x(t0, static_cast<Index>(factors_.size()));
  for (std::size_t j = 0; j < factors_.size(); ++j) x.col(static_cast<Index>(j)) = y.col(factors_[j]).head(t0);
  const Matrix b = y.block(0, h_->n_aggregates(), t0, h_->n_base());
  MrdlmConfig mc = cfg_.mrdlm;
  mc.init_window = static_cast<int>(t0);
  model_ = Mrdlm::initialize(mc, x, b);
  last_row_ = t0 - 1;
  return last_row_;
}

void Pipeline::add_reconciler(const std::string& name, ReconcilerConfig cfg) {
  reconcilers_.erase(name);
  reconcilers_.emplace(name, Reconciler(*h_, std::move(cfg)));
}

Reconciler& Pipeline::reconciler(const std::string& name) {
  auto it = reconcilers_.find(name);
  if (it == reconcilers_.end()) throw DataError("no reconciler named '" + name + "'");
  return it->second;
}

void Pipeline::observe(long t, const Eigen::Ref<const Vector>& y_row, Exec exec) {
  if (t != last_row_ + 1) throw DataError("rows must be observed in order");
  if (y_row.size() != h_->size()) throw DataError("observation row has the wrong width");
  const Vector b = y_row.tail(h_->n_base());
  const long lag = t - record_origin_;
  if (record_origin_ >= 0 && lag >= 1) {
    for (auto& [name, recs] : records_) {
      if (lag <= static_cast<long>(recs.size())) reconciler(name).update(recs[static_cast<std::size_t>(lag - 1)], b, exec);
    }
  }
  Vector x(static_cast<Index>(factors_.size()));
  for (std::size_t j = 0; j < factors_.size(); ++j) x[static_cast<Index>(j)] = y_row[factors_[j]];
  model_.update(x, b, exec);
  last_row_ = t;
}

std::vector<GaussianFactorMoments> Pipeline::priors(Exec exec) const {
  return model_.assemble_prior(cfg_.horizon, exec);
}

std::map<std::string, OriginForecast> Pipeline::forecast(const std::vector<GaussianFactorMoments>& priors,
                                                        const std::vector<std::vector<ExoValue>>& exo, Exec exec) {
  std::map<std::string, OriginForecast> out;
  records_.clear();
  record_origin_ = last_row_;
  const int hz = static_cast<int>(priors.size());
  for (auto& [name, rec] : reconcilers_) {
    OriginForecast of;
    of.origin = last_row_;
    auto& recs = records_[name];
    recs.resize(static_cast<std::size_t>(hz));
    for (int j = 0; j < hz; ++j) {
      static const std::vector<ExoValue> none;
      const auto& e = j < static_cast<int>(exo.size()) ? exo[static_cast<std::size_t>(j)] : none;
      of.base.push_back(rec.forecast(priors[static_cast<std::size_t>(j)], e, j + 1,
                                     &recs[static_cast<std::size_t>(j)], exec));
    }
    out.emplace(name, std::move(of));
  }
  return out;
}

}  // namespace dhf
