#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dhf/combination.hpp"
#include "dhf/disaggregation.hpp"
#include "dhf/hierarchy.hpp"
#include "dhf/pipeline.hpp"
#include "dhf/scoring.hpp"

namespace dhf {

/// Exogenous forecasts keyed by the row index of their origin. Only the
/// forecasts issued at an origin are ever read when forecasting from it.
class ExoStream {
 public:
  void add(long origin, int horizon, ExoValue v);
  /// Forecasts issued at `origin`, one list per horizon 1..horizons.
  std::vector<std::vector<ExoValue>> issued_at(long origin, int horizons) const;
  bool empty() const { return by_origin_.empty(); }
  std::size_t size() const;
  long first_origin() const;
  long last_origin() const;

 private:
  std::map<long, std::map<int, std::vector<ExoValue>>> by_origin_;
};

/// Converts forecasts whose origin is already a row index.
ExoStream make_exo_stream(const Hierarchy& h, const std::vector<ExoForecast>& rows);

/// Seasonal-mean forecasts for every series: the mean of the last `years`
/// same-season values, with the variance of the seasonal differences.
/// Intended for demos without an external forecaster.
ExoStream seasonal_mean_exo(const Hierarchy& h, const Matrix& y, long first_origin, long last_origin,
                            int horizon, int period, int years = 3);

struct HorizonBucket {
  std::string label;
  int first = 1;
  int last = 1;
};

/// One bucket per horizon, labelled h1..hN.
std::vector<HorizonBucket> horizon_buckets(int horizon);
/// Consecutive groups of `width` horizons (e.g. quarters of a monthly
/// horizon), labelled q1, q2, ...
std::vector<HorizonBucket> grouped_buckets(int horizon, int width);

struct BacktestPlan {
  /// Rows used for training; the first forecast origin is row train_length-1.
  long train_length = 96;
  /// Origins used only to train the combination weights before scoring.
  long warmup = 52;
  int horizon = 12;
  /// Score every n-th origin.
  long eval_every = 1;
  std::vector<HorizonBucket> buckets;  // empty: one per horizon
  /// One-step residual window for MinT and BU-Shrink.
  long residual_window = 96;
};

struct BacktestConfig {
  PipelineConfig pipeline;
  /// Boundary level for dhf-2step; empty picks the level of the default
  /// factor series.
  std::string boundary_level;
  std::vector<Method> methods;  // empty: all
  std::string benchmark = "bu-diag";
};

/// Base-level forecasts of every method at one origin; a missing entry
/// means the method failed numerically there.
struct OriginOutput {
  long origin = 0;
  std::vector<Method> methods;
  std::vector<std::vector<std::optional<ReconciledForecast>>> forecasts;  // [method][horizon-1]
};

struct BacktestResult {
  std::vector<ScoreTable> tables;  // rmse, log_score, dss; relative filled
  long iterations = 0;
  long scored_origins = 0;
  long failures = 0;  // method/origin pairs with a numerical failure
  /// Largest |dss - dss_from_log_score| over all evaluated forecasts.
  double max_identity_error = 0.0;
};

/// Rolling-origin backtest of the selected methods over the data panel `y`
/// (rows are times, columns all series in hierarchy order). `on_origin`, if
/// set, sees every origin's forecasts before any later row is read.
BacktestResult backtest(const Hierarchy& h, const Matrix& y, const ExoStream& exo, const BacktestPlan& plan,
                        const BacktestConfig& cfg,
                        const std::function<void(const OriginOutput&)>& on_origin = {},
                        Exec exec = default_exec());

/// Boundary level used by dhf-2step when none is configured.
std::string default_boundary(const Hierarchy& h);

}  // namespace dhf
