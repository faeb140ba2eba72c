#pragma once

#include <string>
#include <vector>

#include "dhf/dlm.hpp"
#include "dhf/factor_cov.hpp"
#include "dhf/kernels.hpp"
#include "dhf/types.hpp"

namespace dhf {

/// Discount factors for the factor and base models.
struct DiscountProfile {
  double factor_trend = 0.95;
  double factor_seasonal = 0.97;
  double base_level = 0.97;
  double base_seasonal = 0.99;
  double base_regression = 0.99;
  double variance = 0.99;

  /// "fast", "medium", "slow" or "m5". Throws DataError otherwise.
  static DiscountProfile named(const std::string& name);
};

struct MrdlmConfig {
  DiscountProfile discounts;
  int period = 12;             // < 2 disables seasonality
  int factor_harmonics = 0;    // 0 = full
  int base_harmonics = 0;      // 0 = full
  int init_window = 24;
  double ridge = 1e-6;
  /// Optional per-base-series subsets of factor positions (empty = all).
  std::vector<std::vector<Index>> factor_subsets;
  Index max_factors = 50;
};

/// Discounted estimate of the factor observation covariance:
/// V = D / N with N <- delta N + 1 and
/// D <- delta D + V^{1/2} Q^{-1/2} e e' Q^{-1/2} V^{1/2}.
struct MatrixVarianceState {
  double n = 1.0;
  Matrix d;
  Matrix v() const { return d / n; }
};

MatrixVarianceState matrix_variance_update(const MatrixVarianceState& vs, const Vector& e,
                                           const Matrix& q, double delta);

/// Factor forecast moments for one horizon.
struct FactorForecast {
  Vector mean;
  Matrix cov;
};

/// Multi-regression DLM: a multivariate DLM for n_x observed factors and
/// n_b univariate DLMs for the base series with the factors as
/// contemporaneous regressors.
class Mrdlm {
 public:
  Mrdlm() = default;

  /// Fits initial states by ridge regression on the first `init_window`
  /// rows of the panels (x: T x n_x, fully observed; b: T x n_b with NaN
  /// for missing). Filtering continues from the next row.
  static Mrdlm initialize(const MrdlmConfig& cfg, const Matrix& x, const Matrix& b);

  /// Assembles a model from explicit parts (used by checkpoints and tests).
  static Mrdlm from_parts(MrdlmConfig cfg, DlmSpec factor_spec, std::vector<DlmSpec> base_specs,
                          SvdState factor_state, MatrixVarianceState factor_variance,
                          std::vector<std::vector<Index>> factor_subsets,
                          std::vector<SvdState> base_states, std::vector<VarianceState> base_variances,
                          long steps);

  Index n_factors() const { return n_x_; }
  Index n_base() const { return static_cast<Index>(base_.size()); }
  long steps() const { return steps_; }
  const MrdlmConfig& config() const { return cfg_; }

  /// Factor update, then base updates (parallel across series under
  /// Exec::parallel). Base entries that are NaN skip the measurement step.
  /// Throws DataError when a factor value is missing.
  void update(const Vector& x, const Vector& b, Exec exec = default_exec());

  std::vector<FactorForecast> factor_forecast(int h) const;

  /// Factor-form base priors for horizons 1..h.
  std::vector<GaussianFactorMoments> assemble_prior(int h, Exec exec = default_exec()) const;

  const DlmSpec& factor_spec() const { return factor_spec_; }
  const SvdState& factor_state() const { return factor_state_; }
  const MatrixVarianceState& factor_variance() const { return factor_var_; }
  const std::vector<Index>& factor_subset(Index i) const { return subsets_[static_cast<std::size_t>(i)]; }
  const UnivariateDlm& base_model(Index i) const { return base_[static_cast<std::size_t>(i)]; }

  /// Factor design matrix F_x (state_dim x n_x).
  Matrix factor_design() const;

 private:
  void prepare();

  MrdlmConfig cfg_;
  Index n_x_ = 0;
  DlmSpec factor_spec_;
  std::vector<Index> factor_block_count_;
  Matrix factor_g_;
  std::vector<std::pair<Index, Index>> factor_ranges_;
  std::vector<double> factor_discounts_;
  SvdState factor_state_;
  MatrixVarianceState factor_var_;
  std::vector<std::vector<Index>> subsets_;
  std::vector<UnivariateDlm> base_;
  long steps_ = 0;
};

/// Structural blocks used for one factor or one base series.
DlmSpec factor_block_spec(const MrdlmConfig& cfg);
DlmSpec base_series_spec(const MrdlmConfig& cfg, int n_regressors);

/// Ridge least-squares initial state for a univariate DLM from the rows of
/// `y` (NaN rows skipped) with regressors `x` (rows aligned, may have zero
/// columns). Returns the state at the last row, with state variances set to
/// the residual variance / 10 (regression coefficients scaled by the mean
/// squared regressor), and the residual variance.
struct InitialFit {
  SvdState state;
  double variance = 1.0;
  Vector residuals;  // NaN where y was missing
};
InitialFit fit_initial_state(const DlmSpec& spec, const Eigen::Ref<const Vector>& y,
                             const Eigen::Ref<const Matrix>& x, double ridge);

}  // namespace dhf
