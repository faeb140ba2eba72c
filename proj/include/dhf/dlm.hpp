#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dhf/types.hpp"

namespace dhf {

enum class BlockKind { level, trend, seasonal, regression };

/// One structural component of a DLM together with its discount factor.
struct Block {
  BlockKind kind = BlockKind::level;
  int period = 0;     // seasonal only
  int harmonics = 0;  // seasonal only; 0 means all floor(period/2)
  int width = 0;      // regression only
  double discount = 1.0;

  static Block level(double discount);
  static Block trend(double discount);
  static Block seasonal(int period, int harmonics, double discount);
  static Block regression(int width, double discount);

  Index dim() const;
  /// Effective number of harmonics after applying the default.
  int n_harmonics() const;
};

struct DlmSpec {
  std::vector<Block> blocks;
  double variance_discount = 1.0;
  bool learn_variance = true;
  double fixed_variance = 1.0;

  Index dim() const;
  Index n_regressors() const;
  /// [begin, end) state ranges, one per block.
  std::vector<std::pair<Index, Index>> block_ranges() const;
  /// Offset of the first regression block in the state, or -1.
  Index regression_offset() const;
  /// Throws DataError for invalid discounts or seasonal settings.
  void validate() const;
};

/// Time-invariant evolution matrix G.
Matrix system_matrix(const DlmSpec& spec);

/// Regression vector F_t. Regression coefficients take `regressors` in block
/// order; required iff the spec has a regression block.
Vector design_vector(const DlmSpec& spec, const Vector* regressors = nullptr);

struct Design {
  Vector f;
  Matrix g;
};
Design build_design(const DlmSpec& spec, const Vector* regressors = nullptr);

/// Posterior in SVD form: C = U diag(s)^2 U'.
struct SvdState {
  Vector m;
  Matrix u;
  Vector s;

  static SvdState from_cov(Vector m, const Matrix& c);
  Matrix cov() const;
};

/// Prior (a, R) in SVD form: R = U diag(s)^2 U'.
struct SvdPrior {
  Vector a;
  Matrix u;
  Vector s;

  Matrix cov() const;
};

struct VarianceState {
  double n = 1.0;
  double d = 1.0;
  double s() const { return d / n; }
};

/// Time update with component discounting: W is block diagonal with
/// W_b = (1 - delta_b) / delta_b (G C G')_bb.
SvdPrior svd_predict(const SvdState& state, const Matrix& g,
                     std::span<const std::pair<Index, Index>> ranges, std::span<const double> discounts);
SvdPrior svd_predict(const SvdState& state, const DlmSpec& spec);

/// The discount innovation W for a given state (dense, for forecasting).
Matrix discount_innovation(const SvdState& state, const Matrix& g,
                           std::span<const std::pair<Index, Index>> ranges,
                           std::span<const double> discounts);

struct ScalarUpdate {
  SvdState post;
  double f = 0.0;
  double q = 0.0;
  double e = 0.0;
};

/// Measurement update with a scalar observation y = F'theta + N(0, v).
ScalarUpdate svd_update(const SvdPrior& prior, const Vector& f, double y, double v);

struct MultiUpdate {
  SvdState post;
  Vector f;
  Matrix q;
  Vector e;
};

/// Measurement update with a vector observation y = F'theta + N(0, V),
/// F being state_dim x r and V an r x r covariance.
MultiUpdate svd_update(const SvdPrior& prior, const Matrix& f, const Vector& y, const Matrix& v);

/// Discounted variance learning: n <- dv n + 1, d <- dv d + s e^2 / q_star.
VarianceState variance_update(const VarianceState& vs, double e, double q_star, double delta_v);

/// Mean and covariance of a future regressor vector.
struct RegressorMoments {
  Vector mean;
  Matrix cov;
};

/// One-horizon forecast with its variance split into parts:
/// q = state + coef_mean + coef_trace + obs, where for regression blocks
/// coef_mean = a'Ha and coef_trace = tr(RH).
struct StepForecast {
  double f = 0.0;
  double q = 0.0;
  double state = 0.0;
  double coef_mean = 0.0;
  double coef_trace = 0.0;
  double obs = 0.0;
};

/// Propagated state moments a_{t+j}, R_{t+j}, j = 1..h. W is held at its
/// one-step value.
struct StatePath {
  std::vector<Vector> a;
  std::vector<Matrix> r;
};
StatePath propagate(const SvdState& state, const DlmSpec& spec, int h);

/// h-step forecasts. `future` holds regressor moments per horizon when the
/// spec has regression blocks (throws DataError when missing). `obs_variance`
/// is the observation variance estimate added to q.
std::vector<StepForecast> forecast_h(const SvdState& state, const DlmSpec& spec, int h,
                                     double obs_variance,
                                     std::span<const RegressorMoments> future = {});

/// Univariate DLM with SVD filtering and optional variance learning.
class UnivariateDlm {
 public:
  UnivariateDlm() = default;
  UnivariateDlm(DlmSpec spec, SvdState state, VarianceState variance);

  const DlmSpec& spec() const { return spec_; }
  const SvdState& state() const { return state_; }
  const VarianceState& variance() const { return variance_; }
  double obs_variance() const;

  /// Time update then (when y is present) measurement and variance update.
  /// Returns the one-step forecast made before seeing y.
  StepForecast step(std::optional<double> y, const Vector* regressors = nullptr);

  std::vector<StepForecast> forecast(int h, std::span<const RegressorMoments> future = {}) const;

  void set_state(SvdState s) { state_ = std::move(s); }
  void set_variance(VarianceState v) { variance_ = v; }

 private:
  DlmSpec spec_;
  Matrix g_;
  std::vector<std::pair<Index, Index>> ranges_;
  std::vector<double> discounts_;
  SvdState state_;
  VarianceState variance_;
};

}  // namespace dhf
