#include "dhf/disaggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "dhf/errors.hpp"

namespace dhf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Moments of the aggregate over `support`: loadings sum, qbar and prior mean.
struct AggregateMoments {
  Vector load;  // Delta' 1_A
  Vector sigma_load;  // Sigma Delta' 1_A
  double qbar = 0.0;
  double mean = 0.0;
};

AggregateMoments aggregate_moments(const GaussianFactorMoments& prior, std::span<const Index> support) {
  AggregateMoments am;
  am.load = Vector::Zero(prior.n_factors());
  double spec = 0.0;
  for (Index j : support) {
    am.load += prior.loadings.row(j).transpose();
    spec += prior.specific[j];
    am.mean += prior.mean[j];
  }
  am.sigma_load = prior.factor_cov * am.load;
  am.qbar = std::max(am.load.dot(am.sigma_load), 0.0) + spec;
  return am;
}

double degenerate_tol(double scale) { return 1e-12 * std::max(scale, 1.0); }

}  // namespace

Calibrated calibrate(double prior_f, double prior_q, double exo_f, double exo_q, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw DataError("calibration rho must lie in [0, 1]");
  return {prior_f + rho * (exo_f - prior_f), (1.0 - rho * rho) * prior_q + rho * rho * exo_q};
}

Vector Disaggregation::variances(const GaussianFactorMoments& prior) const {
  Vector v = ((prior.loadings * prior.factor_cov).array() * prior.loadings.array()).rowwise().sum().matrix() +
             prior.specific;
  v -= correction() * gain.cwiseAbs2();
  return v.cwiseMax(0.0);
}

Matrix Disaggregation::dense_cov(const GaussianFactorMoments& prior) const {
  return prior.dense_cov() - correction() * gain * gain.transpose();
}

Disaggregation disaggregate(const GaussianFactorMoments& prior, const Eigen::Ref<const Vector>& c,
                            double f_hat, std::optional<double> q_hat) {
  if (c.size() != prior.n_base()) throw DataError("disaggregate: weight vector has the wrong size");
  Disaggregation out;
  out.gain = cov_vec(prior, c);
  out.qbar = c.dot(out.gain);
  if (!(out.qbar > degenerate_tol(0.0))) {
    throw NumericalError("disaggregate: forecast series has zero prior variance (degenerate aggregate)");
  }
  out.qhat = q_hat.value_or(out.qbar);
  if (out.qhat < 0.0) throw DataError("disaggregate: negative exogenous variance");
  out.inflated = out.qhat > out.qbar;
  out.mean = prior.mean + out.gain * ((f_hat - c.dot(prior.mean)) / out.qbar);
  return out;
}

std::optional<Index> SlotLayout::find(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<Index>(it - names.begin());
}

SlotLayout slot_layout(const Hierarchy& h) {
  SlotLayout lay;
  std::map<std::string, Index> index;
  lay.slot_of.resize(static_cast<std::size_t>(h.n_base()));
  for (Index j = 0; j < h.n_base(); ++j) {
    std::map<std::string, int> seen;
    for (Index a : h.ancestors(j)) {
      const std::string& lvl = h.level(a);
      const int n = ++seen[lvl];
      const std::string name = n == 1 ? lvl : lvl + "#" + std::to_string(n);
      auto [it, fresh] = index.emplace(name, lay.size());
      if (fresh) {
        lay.names.push_back(name);
        lay.levels.push_back(lvl);
      }
      lay.slot_of[static_cast<std::size_t>(j)].push_back(it->second);
    }
  }
  return lay;
}

std::vector<Index> RegressorPanel::active(Index i) const {
  std::vector<Index> out;
  for (Index s = 0; s < n_slots(); ++s)
    if (has(i, s)) out.push_back(s);
  return out;
}

Index RegressorPanel::n_empty() const {
  Index n = 0;
  for (Index i = 0; i < n_base(); ++i)
    if (active(i).empty()) ++n;
  return n;
}

RegressorPanel empty_panel(const SlotLayout& layout, const Vector& prior_mean) {
  RegressorPanel p;
  p.slot_names = layout.names;
  p.prior_mean = prior_mean;
  p.mean = Matrix::Constant(prior_mean.size(), layout.size(), kNaN);
  p.var = Matrix::Constant(prior_mean.size(), layout.size(), kNaN);
  return p;
}

namespace {

// Writes the disaggregated forecast of `series` into the panel; `slot_for`
// maps a base index to its destination slot.
template <class SlotFor>
bool write_forecast(RegressorPanel& panel, const GaussianFactorMoments& prior, const Hierarchy& h,
                    Index series, double f_hat, std::optional<double> q_hat, SlotFor slot_for) {
  const auto support = h.support(series);
  const AggregateMoments am = aggregate_moments(prior, support);
  if (!(am.qbar > degenerate_tol(0.0))) {
    throw NumericalError("forecast series '" + h.id(series) + "' has zero prior variance");
  }
  const double qhat = q_hat.value_or(am.qbar);
  if (qhat < 0.0) throw DataError("negative exogenous variance for '" + h.id(series) + "'");
  const double shift = (f_hat - am.mean) / am.qbar;
  const double corr = (am.qbar - qhat) / (am.qbar * am.qbar);
  for (Index j : support) {
    const double qj_own = std::max(prior.loadings.row(j).dot(prior.factor_cov * prior.loadings.row(j).transpose()), 0.0) +
                          prior.specific[j];
    const double g = prior.loadings.row(j).dot(am.sigma_load) + prior.specific[j];
    const Index s = slot_for(j);
    panel.mean(j, s) = prior.mean[j] + g * shift;
    panel.var(j, s) = std::max(qj_own - corr * g * g, 0.0);
  }
  return qhat > am.qbar;
}

}  // namespace

void add_regressor(RegressorPanel& panel, const GaussianFactorMoments& prior, const Hierarchy& h,
                   Index series, Index slot, double f_hat, std::optional<double> q_hat) {
  if (write_forecast(panel, prior, h, series, f_hat, q_hat, [slot](Index) { return slot; })) {
    panel.inflated = true;
  }
}

RegressorPanel build_regressors(const GaussianFactorMoments& prior, std::span<const ExoValue> exo,
                                const Hierarchy& h, const SlotLayout& layout, Exec exec) {
  if (prior.n_base() != h.n_base()) throw DataError("prior and hierarchy disagree on n_b");
  std::vector<char> seen(static_cast<std::size_t>(h.size()), 0);
  for (const auto& e : exo) {
    if (e.series < 0 || e.series >= h.size()) throw DataError("exogenous forecast for an unknown series");
    if (seen[static_cast<std::size_t>(e.series)]) {
      throw DataError("duplicate exogenous forecast for '" + h.id(e.series) + "'");
    }
    seen[static_cast<std::size_t>(e.series)] = 1;
  }
  RegressorPanel panel = empty_panel(layout, prior.mean);
  std::vector<char> inflated(exo.size(), 0);
  for_each_index(exec, static_cast<Index>(exo.size()), [&](Index k) {
    const auto& e = exo[static_cast<std::size_t>(k)];
    auto slot_for = [&](Index j) {
      const auto anc = h.ancestors(j);
      const auto pos = std::find(anc.begin(), anc.end(), e.series) - anc.begin();
      return layout.slot_of[static_cast<std::size_t>(j)][static_cast<std::size_t>(pos)];
    };
    inflated[static_cast<std::size_t>(k)] = write_forecast(panel, prior, h, e.series, e.mean, e.variance, slot_for);
  });
  panel.inflated = std::any_of(inflated.begin(), inflated.end(), [](char c) { return c != 0; });
  return panel;
}

}  // namespace dhf
