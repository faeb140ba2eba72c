#pragma once

#include <string>
#include <vector>

#include "dhf/structured_cov.hpp"
#include "dhf/types.hpp"

namespace dhf {

/// Root-mean-squared error over all finite (pred, actual) pairs.
double rmse(const Matrix& preds, const Matrix& actuals);

/// Negative log density of `actual` under N(mean, cov).
double gaussian_log_score(const Vector& mean, const StructuredCovariance& cov, const Vector& actual);
double gaussian_log_score(const Vector& mean, const Matrix& cov, const Vector& actual);

/// Dawid-Sebastiani score -log det(cov) - e' cov^-1 e; higher is better.
double dss(const Vector& mean, const StructuredCovariance& cov, const Vector& actual);
double dss(const Vector& mean, const Matrix& cov, const Vector& actual);

/// Both scores from one factorisation.
struct GaussianScores {
  double log_score = 0.0;
  double dss = 0.0;
};
GaussianScores gaussian_scores(const Vector& mean, const StructuredCovariance& cov, const Vector& actual);

/// The Dawid-Sebastiani score implied by a log score over n dimensions:
/// -2 log_score + n log(2 pi).
double dss_from_log_score(double log_score, Index n);

enum class Metric { rmse, log_score, dss };
const char* metric_name(Metric m);
/// RMSE and log score are better when lower, DSS when higher.
bool lower_is_better(Metric m);

/// Scores laid out as method x level x horizon bucket.
struct ScoreTable {
  Metric metric = Metric::rmse;
  std::string benchmark;
  std::vector<std::string> methods;
  std::vector<std::string> levels;
  std::vector<std::string> horizons;
  std::vector<double> value;     // absolute scores
  std::vector<double> relative;  // percent of benchmark, filled by report_relative
  std::vector<char> best;

  ScoreTable() = default;
  ScoreTable(Metric m, std::vector<std::string> methods, std::vector<std::string> levels,
             std::vector<std::string> horizons);

  std::size_t offset(std::size_t m, std::size_t l, std::size_t h) const {
    return (m * levels.size() + l) * horizons.size() + h;
  }
  double& at(std::size_t m, std::size_t l, std::size_t h) { return value[offset(m, l, h)]; }
  double at(std::size_t m, std::size_t l, std::size_t h) const { return value[offset(m, l, h)]; }
  std::size_t method_index(const std::string& name) const;
};

/// Percent-of-benchmark cells: 100 m / b for RMSE and 100 |m| / |b| for the
/// scores; NaN when either side is non-finite or the benchmark is zero.
/// Flags the best method per (level, horizon).
ScoreTable report_relative(ScoreTable table, const std::string& benchmark);

/// Tidy CSV: metric,level,horizon,method,value,relative,best.
std::string render_csv(const ScoreTable& table);
/// Aligned text: one block per level, methods as rows, horizons as
/// columns, percentages with N/M for non-finite cells and * for the best.
std::string render_text(const ScoreTable& table);

}  // namespace dhf
