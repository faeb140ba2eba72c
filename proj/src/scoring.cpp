#include "dhf/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "dhf/errors.hpp"

namespace dhf {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double rmse(const Matrix& preds, const Matrix& actuals) {
  if (preds.rows() != actuals.rows() || preds.cols() != actuals.cols()) throw DataError("rmse: shape mismatch");
  double ss = 0.0;
  long n = 0;
  for (Index j = 0; j < preds.cols(); ++j) {
    for (Index i = 0; i < preds.rows(); ++i) {
      const double e = preds(i, j) - actuals(i, j);
      if (std::isfinite(e)) {
        ss += e * e;
        ++n;
      }
    }
  }
  if (n == 0) throw DataError("rmse: empty group");
  return std::sqrt(ss / static_cast<double>(n));
}

GaussianScores gaussian_scores(const Vector& mean, const StructuredCovariance& cov, const Vector& actual) {
  if (mean.size() != actual.size() || cov.size() != mean.size()) throw DataError("score: dimension mismatch");
  const Vector e = actual - mean;
  const double ld = cov.logdet();
  const double quad = e.dot(cov.solve(e).col(0));
  if (!(quad >= 0.0)) throw NumericalError("score: covariance is not positive definite");
  const double n = static_cast<double>(mean.size());
  return {0.5 * (n * kLog2Pi + ld + quad), -ld - quad};
}

double gaussian_log_score(const Vector& mean, const StructuredCovariance& cov, const Vector& actual) {
  return gaussian_scores(mean, cov, actual).log_score;
}

double dss(const Vector& mean, const StructuredCovariance& cov, const Vector& actual) {
  return gaussian_scores(mean, cov, actual).dss;
}

namespace {

GaussianScores dense_scores(const Vector& mean, const Matrix& cov, const Vector& actual) {
  if (mean.size() != actual.size() || cov.rows() != mean.size() || cov.cols() != mean.size()) {
    throw DataError("score: dimension mismatch");
  }
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("score: covariance is not positive definite");
  const Vector e = actual - mean;
  const Vector z = llt.matrixL().solve(e);
  const double ld = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double quad = z.squaredNorm();
  const double n = static_cast<double>(mean.size());
  return {0.5 * (n * kLog2Pi + ld + quad), -ld - quad};
}

}  // namespace

double gaussian_log_score(const Vector& mean, const Matrix& cov, const Vector& actual) {
  return dense_scores(mean, cov, actual).log_score;
}

double dss(const Vector& mean, const Matrix& cov, const Vector& actual) {
  return dense_scores(mean, cov, actual).dss;
}

double dss_from_log_score(double log_score, Index n) {
  return -2.0 * log_score + static_cast<double>(n) * kLog2Pi;
}

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::rmse: return "rmse";
    case Metric::log_score: return "log_score";
    case Metric::dss: return "dss";
  }
  return "?";
}

bool lower_is_better(Metric m) { return m != Metric::dss; }

ScoreTable::ScoreTable(Metric m, std::vector<std::string> methods_, std::vector<std::string> levels_,
                       std::vector<std::string> horizons_)
    : metric(m), methods(std::move(methods_)), levels(std::move(levels_)), horizons(std::move(horizons_)) {
  const std::size_t n = methods.size() * levels.size() * horizons.size();
  value.assign(n, std::numeric_limits<double>::quiet_NaN());
}

std::size_t ScoreTable::method_index(const std::string& name) const {
  auto it = std::find(methods.begin(), methods.end(), name);
  if (it == methods.end()) throw DataError("score table has no method '" + name + "'");
  return static_cast<std::size_t>(it - methods.begin());
}

ScoreTable report_relative(ScoreTable t, const std::string& benchmark) {
  if (t.methods.empty()) throw DataError("report_relative: no methods");
  const std::size_t b = t.method_index(benchmark);
  t.benchmark = benchmark;
  t.relative.assign(t.value.size(), std::numeric_limits<double>::quiet_NaN());
  t.best.assign(t.value.size(), 0);
  const bool ratio_abs = t.metric != Metric::rmse;
  for (std::size_t l = 0; l < t.levels.size(); ++l) {
    for (std::size_t h = 0; h < t.horizons.size(); ++h) {
      const double bv = t.at(b, l, h);
      std::size_t best = t.methods.size();
      for (std::size_t m = 0; m < t.methods.size(); ++m) {
        const double v = t.at(m, l, h);
        if (std::isfinite(v) && std::isfinite(bv) && bv != 0.0) {
          t.relative[t.offset(m, l, h)] = ratio_abs ? 100.0 * (std::abs(v) / std::abs(bv)) : 100.0 * (v / bv);
        }
        if (!std::isfinite(v)) continue;
        if (best == t.methods.size()) {
          best = m;
        } else {
          const double cur = t.at(best, l, h);
          if (lower_is_better(t.metric) ? v < cur : v > cur) best = m;
        }
      }
      if (best < t.methods.size()) t.best[t.offset(best, l, h)] = 1;
    }
  }
  return t;
}

std::string render_csv(const ScoreTable& t) {
  std::ostringstream os;
  os << "metric,level,horizon,method,value,relative,best\n";
  for (std::size_t l = 0; l < t.levels.size(); ++l) {
    for (std::size_t h = 0; h < t.horizons.size(); ++h) {
      for (std::size_t m = 0; m < t.methods.size(); ++m) {
        const std::size_t k = t.offset(m, l, h);
        os << metric_name(t.metric) << ',' << t.levels[l] << ',' << t.horizons[h] << ',' << t.methods[m] << ','
           << fmt17(t.value[k]) << ',' << (t.relative.empty() ? "nan" : fmt17(t.relative[k])) << ','
           << (!t.best.empty() && t.best[k] ? 1 : 0) << '\n';
      }
    }
  }
  return os.str();
}

std::string render_text(const ScoreTable& t) {
  std::size_t wm = 6;
  for (const auto& m : t.methods) wm = std::max(wm, m.size());
  std::ostringstream os;
  os << metric_name(t.metric);
  if (!t.benchmark.empty()) os << " (% of " << t.benchmark << ")";
  os << '\n';
  char buf[64];
  for (std::size_t l = 0; l < t.levels.size(); ++l) {
    os << '\n' << t.levels[l] << '\n';
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(wm), "");
    os << buf;
    for (const auto& h : t.horizons) {
      std::snprintf(buf, sizeof buf, " %9s", h.c_str());
      os << buf;
    }
    os << '\n';
    for (std::size_t m = 0; m < t.methods.size(); ++m) {
      std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(wm), t.methods[m].c_str());
      os << buf;
      for (std::size_t h = 0; h < t.horizons.size(); ++h) {
        const std::size_t k = t.offset(m, l, h);
        const double v = t.relative.empty() ? t.value[k] : t.relative[k];
        const char mark = !t.best.empty() && t.best[k] ? '*' : ' ';
        if (std::isfinite(v)) std::snprintf(buf, sizeof buf, " %8.1f%c", v, mark);
        else std::snprintf(buf, sizeof buf, " %8s%c", "N/M", mark);
        os << buf;
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace dhf
