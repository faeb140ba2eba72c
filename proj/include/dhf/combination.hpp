#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dhf/disaggregation.hpp"
#include "dhf/factor_cov.hpp"
#include "dhf/structured_cov.hpp"
#include "dhf/types.hpp"

namespace dhf {

struct CombinationConfig {
  double discount = 0.99;
  /// Weight prior sd is 1 / (divisor k) with k regressors per series.
  double divisor = 2.0;
  /// Per-level overrides of `divisor`, keyed by slot level label.
  std::map<std::string, double> level_divisors;
  /// Pooled model: sd of series deviations from the shared weights.
  double deviation_divisor = 8.0;
  /// Regress b - fbar on h - fbar (true) or b on h (false).
  bool offset = true;
  /// Degrees of freedom for the variance scaling; infinity disables it.
  double nu = std::numeric_limits<double>::infinity();
  Index dense_cap = kDefaultDenseCap;
};

/// Prior mean and variances for k weights: N(0, (1/(divisor k))^2).
struct WeightPrior {
  Vector mean;
  Vector var;
};
WeightPrior init_weight_prior(Index k, double divisor);

/// Which slots carry a weight for each base series, and where those
/// weights sit in the stacked state.
struct WeightLayout {
  std::vector<std::string> slot_names;
  std::vector<std::vector<Index>> slots;  // per base series
  std::vector<Index> offset;              // per base series
  std::vector<Index> position_series;     // per state position
  std::vector<Index> position_slot;       // per state position
  Index dim = 0;

  Index n_base() const { return static_cast<Index>(slots.size()); }
  Index n_slots() const { return static_cast<Index>(slot_names.size()); }
  Index k(Index i) const { return static_cast<Index>(slots[static_cast<std::size_t>(i)].size()); }

  static WeightLayout from_slots(std::vector<std::string> names, std::vector<std::vector<Index>> slots);
  static WeightLayout from_panel(const RegressorPanel& panel);
};

/// Reconciled base-level forecast: mean and structured covariance.
struct ReconciledForecast {
  Vector mean;
  StructuredCovariance cov;
};

/// Regressor values and variances laid out along the state, plus offsets.
struct PanelDesign {
  Vector x;     // per state position
  Vector h;     // per state position
  Vector base;  // per base series: fbar (offset form) or 0
};
PanelDesign panel_design(const WeightLayout& layout, const RegressorPanel& panel, bool offset);

/// One weight trajectory row.
struct WeightRecord {
  Index series = 0;
  std::string slot;
  double mean = 0.0;
  double sd = 0.0;
};

/// Dynamic combination regression with independent weights per series and
/// a dense state covariance. Observations enter as S b; because S has full
/// column rank the update is carried out exactly on the base rows.
class FlatCombination {
 public:
  FlatCombination() = default;
  FlatCombination(WeightLayout layout, CombinationConfig cfg);

  /// One step with outcome b (NaN entries are skipped), regressors from
  /// `panel` and observation covariance `prior` (the matching prior).
  void update(const RegressorPanel& panel, const GaussianFactorMoments& prior, const Vector& b);

  /// Forecast `steps` periods past the last update.
  ReconciledForecast forecast(const RegressorPanel& panel, const GaussianFactorMoments& prior,
                              int steps) const;

  const WeightLayout& layout() const { return layout_; }
  const CombinationConfig& config() const { return cfg_; }
  const Vector& mean() const { return m_; }
  const Matrix& cov() const { return c_; }
  void set_state(Vector m, Matrix c);
  long updates() const { return updates_; }
  void set_updates(long n) { updates_ = n; }

  std::vector<WeightRecord> weights() const;

 private:
  WeightLayout layout_;
  CombinationConfig cfg_;
  Vector m_;
  Matrix c_;
  long updates_ = 0;
};

/// Combination regression with a hierarchical prior: series weights are
/// theta_b = F_h theta_h + v, v ~ N(0, V), and only the shared weights
/// theta_h evolve through time.
class HierCombination {
 public:
  HierCombination() = default;
  HierCombination(WeightLayout layout, CombinationConfig cfg);
  /// Explicit deviation variances per state position.
  HierCombination(WeightLayout layout, CombinationConfig cfg, Vector deviation_var);

  void update(const RegressorPanel& panel, const GaussianFactorMoments& prior, const Vector& b);
  ReconciledForecast forecast(const RegressorPanel& panel, const GaussianFactorMoments& prior,
                              int steps) const;

  const WeightLayout& layout() const { return layout_; }
  const CombinationConfig& config() const { return cfg_; }
  const Vector& shared_mean() const { return mh_; }
  const Matrix& shared_cov() const { return ch_; }
  const Vector& series_mean() const { return mb_; }
  const Matrix& series_cov() const { return cb_; }
  const Vector& deviation_var() const { return v_; }
  void set_state(Vector mh, Matrix ch, Vector mb, Matrix cb);
  long updates() const { return updates_; }
  void set_updates(long n) { updates_ = n; }

  std::vector<WeightRecord> weights() const;

 private:
  Matrix selection() const;  // F_h, dim x n_slots

  WeightLayout layout_;
  CombinationConfig cfg_;
  Vector mh_;
  Matrix ch_;
  Vector mb_;
  Matrix cb_;
  Vector v_;
  long updates_ = 0;
};

/// Moments of the reconciled forecast given weight moments (m, R).
ReconciledForecast combine_moments(const WeightLayout& layout, const PanelDesign& design,
                                   const GaussianFactorMoments& prior, const Vector& m,
                                   const Matrix& r, double nu);

}  // namespace dhf
