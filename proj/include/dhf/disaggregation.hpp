#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dhf/factor_cov.hpp"
#include "dhf/hierarchy.hpp"
#include "dhf/kernels.hpp"
#include "dhf/types.hpp"

namespace dhf {

/// An exogenous forecast of one series at one horizon. A missing variance
/// marks a point forecast.
struct ExoForecast {
  std::string series_id;
  long origin = 0;
  int horizon = 1;
  double mean = 0.0;
  std::optional<double> variance;
};

/// Index-resolved exogenous forecast used internally.
struct ExoValue {
  Index series = 0;
  double mean = 0.0;
  std::optional<double> variance;
};

struct Calibrated {
  double f = 0.0;
  double q = 0.0;
};

/// f* = f + rho (f_hat - f), q* = (1 - rho^2) q + rho^2 q_hat.
Calibrated calibrate(double prior_f, double prior_q, double exo_f, double exo_q, double rho);

/// Prior revised by a forecast of c'b: mean f + g (f_hat - c'f) / qbar and
/// covariance Q - g g' (qbar - q_hat) / qbar^2, with g = Q c. The
/// covariance is kept as the prior plus this rank-one term.
struct Disaggregation {
  Vector mean;
  Vector gain;  // g = Q c
  double qbar = 0.0;
  double qhat = 0.0;
  bool inflated = false;  // q_hat > qbar: the correction widens the prior

  double correction() const { return (qbar - qhat) / (qbar * qbar); }
  Vector variances(const GaussianFactorMoments& prior) const;
  Matrix dense_cov(const GaussianFactorMoments& prior) const;
};

/// Throws NumericalError when c'Qc is not positive. A point forecast sets
/// q_hat = qbar (mean shift only).
Disaggregation disaggregate(const GaussianFactorMoments& prior, const Eigen::Ref<const Vector>& c,
                            double f_hat, std::optional<double> q_hat);

/// Regressor slots: one per level label, with "#n" appended when a base
/// series has several ancestors in the same level. `slot_of[j][p]` is the
/// slot of the p-th entry of h.ancestors(j).
struct SlotLayout {
  std::vector<std::string> names;
  std::vector<std::string> levels;  // level label behind each slot
  std::vector<std::vector<Index>> slot_of;

  Index size() const { return static_cast<Index>(names.size()); }
  std::optional<Index> find(const std::string& name) const;
};

SlotLayout slot_layout(const Hierarchy& h);

/// Disaggregated forecasts per base series and slot. Absent entries are NaN.
struct RegressorPanel {
  std::vector<std::string> slot_names;
  Vector prior_mean;  // base prior means used for these forecasts
  Matrix mean;        // n_b x n_slots
  Matrix var;         // n_b x n_slots
  bool inflated = false;

  Index n_base() const { return mean.rows(); }
  Index n_slots() const { return mean.cols(); }
  bool has(Index i, Index s) const { return std::isfinite(mean(i, s)); }
  std::vector<Index> active(Index i) const;
  /// Number of base series without any regressor.
  Index n_empty() const;
};

RegressorPanel empty_panel(const SlotLayout& layout, const Vector& prior_mean);

/// Disaggregates every exogenous forecast onto the base series beneath it.
/// Work is confined to the support of each forecast series, so the total
/// cost is O(nnz(S) n_x). Throws DataError for duplicate forecasts.
RegressorPanel build_regressors(const GaussianFactorMoments& prior, std::span<const ExoValue> exo,
                                const Hierarchy& h, const SlotLayout& layout,
                                Exec exec = default_exec());

/// Disaggregates one forecast of series `series` into slot `slot` of `panel`.
void add_regressor(RegressorPanel& panel, const GaussianFactorMoments& prior, const Hierarchy& h,
                   Index series, Index slot, double f_hat, std::optional<double> q_hat);

}  // namespace dhf
