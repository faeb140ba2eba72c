#include "dhf/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "dhf/baselines.hpp"
#include "dhf/errors.hpp"
#include "dhf/factor_cov.hpp"

namespace dhf {

void ExoStream::add(long origin, int horizon, ExoValue v) {
  if (horizon < 1) throw DataError("exogenous forecast horizon must be at least 1");
  by_origin_[origin][horizon].push_back(v);
}

std::vector<std::vector<ExoValue>> ExoStream::issued_at(long origin, int horizons) const {
  std::vector<std::vector<ExoValue>> out(static_cast<std::size_t>(horizons));
  auto it = by_origin_.find(origin);
  if (it == by_origin_.end()) return out;
  for (const auto& [j, vals] : it->second)
    if (j <= horizons) out[static_cast<std::size_t>(j - 1)] = vals;
  return out;
}

std::size_t ExoStream::size() const {
  std::size_t n = 0;
  for (const auto& [o, m] : by_origin_)
    for (const auto& [j, v] : m) n += v.size();
  return n;
}

long ExoStream::first_origin() const { return by_origin_.empty() ? -1 : by_origin_.begin()->first; }
long ExoStream::last_origin() const { return by_origin_.empty() ? -1 : by_origin_.rbegin()->first; }

ExoStream make_exo_stream(const Hierarchy& h, const std::vector<ExoForecast>& rows) {
  ExoStream s;
  for (const auto& r : rows) s.add(r.origin, r.horizon, {h.index_of(r.series_id), r.mean, r.variance});
  return s;
}

ExoStream seasonal_mean_exo(const Hierarchy& h, const Matrix& y, long first_origin, long last_origin, int horizon,
                            int period, int years) {
  if (period < 1 || years < 1) throw DataError("seasonal-mean forecasts need period >= 1 and years >= 1");
  ExoStream s;
  last_origin = std::min<long>(last_origin, static_cast<long>(y.rows()) - 1);
  for (long t = std::max(first_origin, 0L); t <= last_origin; ++t) {
    for (Index i = 0; i < h.size(); ++i) {
      double ss = 0.0;
      int nd = 0;
      for (long u = t; u > t - static_cast<long>(years) * period && u - period >= 0; --u) {
        const double d = y(u, i) - y(u - period, i);
        if (std::isfinite(d)) {
          ss += d * d;
          ++nd;
        }
      }
      std::optional<double> var;
      if (nd >= 2 && ss > 0.0) var = ss / nd;
      for (int j = 1; j <= horizon; ++j) {
        double sum = 0.0;
        int k = 0;
        for (long u = t + j - period; u >= 0 && k < years; u -= period) {
          if (u > t) continue;
          if (std::isfinite(y(u, i))) {
            sum += y(u, i);
            ++k;
          }
        }
        double mean = k > 0 ? sum / k : y(t, i);
        if (!std::isfinite(mean)) continue;
        s.add(t, j, {i, mean, var});
      }
    }
  }
  return s;
}

std::vector<HorizonBucket> horizon_buckets(int horizon) {
  std::vector<HorizonBucket> out;
  for (int j = 1; j <= horizon; ++j) out.push_back({"h" + std::to_string(j), j, j});
  return out;
}

std::vector<HorizonBucket> grouped_buckets(int horizon, int width) {
  if (width < 1) throw DataError("horizon bucket width must be positive");
  std::vector<HorizonBucket> out;
  for (int j = 1, q = 1; j <= horizon; j += width, ++q)
    out.push_back({"q" + std::to_string(q), j, std::min(horizon, j + width - 1)});
  return out;
}

std::string default_boundary(const Hierarchy& h) {
  const auto f = default_factors(h);
  if (f.empty()) throw DataError("hierarchy has no aggregates to split at");
  return h.level(f.front());
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_dhf(Method m) { return m == Method::dhf || m == Method::dhf_2step || m == Method::dhf_hier; }

// Rows of S for the series of one level.
SparseRowMatrix level_rows(const Hierarchy& h, const std::vector<Index>& series) {
  std::vector<Eigen::Triplet<double>> trip;
  const auto& s = h.summing().sparse();
  for (std::size_t r = 0; r < series.size(); ++r)
    for (SparseRowMatrix::InnerIterator it(s, series[r]); it; ++it)
      trip.emplace_back(static_cast<Index>(r), it.col(), it.value());
  SparseRowMatrix out(static_cast<Index>(series.size()), h.n_base());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

struct Cell {
  double sse = 0.0;
  long n_err = 0;
  double ls = 0.0;
  double ds = 0.0;
  long n_score = 0;
};

// Exogenous forecasts for every series, gaps filled from the prior.
struct FilledForecast {
  Vector mean;
  Vector var;
};

FilledForecast fill_forecast(const Hierarchy& h, const GaussianFactorMoments& prior,
                             const std::vector<ExoValue>& exo) {
  const HierarchyMoments hm = project(prior, h.summing());
  FilledForecast f{hm.mean(), hm.variances()};
  for (const auto& e : exo) {
    f.mean[e.series] = e.mean;
    if (e.variance) f.var[e.series] = *e.variance;
  }
  return f;
}

Matrix window_matrix(const std::deque<Vector>& rows, Index first, Index count) {
  Matrix m(static_cast<Index>(rows.size()), count);
  for (std::size_t t = 0; t < rows.size(); ++t) m.row(static_cast<Index>(t)) = rows[t].segment(first, count).transpose();
  return m;
}

Vector positive_variances(Vector v) {
  const double scale = v.cwiseAbs().maxCoeff();
  const double floor = scale > 0.0 ? 1e-10 * scale : 1.0;
  for (Index i = 0; i < v.size(); ++i)
    if (!(v[i] > floor)) v[i] = floor;
  return v;
}

}  // namespace

BacktestResult backtest(const Hierarchy& h, const Matrix& y, const ExoStream& exo, const BacktestPlan& plan,
                        const BacktestConfig& cfg, const std::function<void(const OriginOutput&)>& on_origin,
                        Exec exec) {
  const long n_rows = static_cast<long>(y.rows());
  if (y.cols() != h.size()) throw DataError("data panel does not cover every series");
  if (plan.train_length < 1 || plan.train_length >= n_rows) {
    throw DataError("train_length must be at least 1 and below the number of rows");
  }
  if (plan.horizon < 1) throw DataError("horizon must be at least 1");
  if (plan.eval_every < 1 || plan.warmup < 0) throw DataError("invalid evaluation cadence");
  const int hz = plan.horizon;
  const Index nb = h.n_base();

  std::vector<Method> methods = cfg.methods.empty() ? all_methods() : cfg.methods;
  std::vector<std::string> names;
  for (Method m : methods) names.push_back(method_name(m));
  if (std::find(names.begin(), names.end(), cfg.benchmark) == names.end()) {
    throw DataError("benchmark '" + cfg.benchmark + "' is not among the methods");
  }
  const auto buckets = plan.buckets.empty() ? horizon_buckets(hz) : plan.buckets;
  std::vector<int> bucket_of(static_cast<std::size_t>(hz) + 1, -1);
  for (std::size_t k = 0; k < buckets.size(); ++k)
    for (int j = std::max(1, buckets[k].first); j <= std::min(hz, buckets[k].last); ++j)
      bucket_of[static_cast<std::size_t>(j)] = static_cast<int>(k);

  PipelineConfig pc = cfg.pipeline;
  pc.horizon = hz;
  Pipeline pipe(h, pc);
  for (Method m : methods) {
    if (!is_dhf(m)) continue;
    ReconcilerConfig rc = pc.reconcile;
    rc.boundary_level.clear();
    rc.pooled = false;
    if (m == Method::dhf_2step) rc.boundary_level = cfg.boundary_level.empty() ? default_boundary(h) : cfg.boundary_level;
    if (m == Method::dhf_hier) rc.pooled = true;
    pipe.add_reconciler(method_name(m), rc);
  }

  long t = pipe.initialize(y, plan.train_length);
  while (t < plan.train_length - 1) {
    ++t;
    pipe.observe(t, y.row(t).transpose(), exec);
  }

  const auto& levels = h.level_names();
  std::vector<std::vector<Index>> level_series;
  std::vector<SparseRowMatrix> level_r;
  for (const auto& l : levels) {
    level_series.push_back(h.series_in_level(l));
    level_r.push_back(level_rows(h, level_series.back()));
  }
  std::vector<Cell> cells(methods.size() * levels.size() * buckets.size());
  auto cell = [&](std::size_t m, std::size_t l, std::size_t b) -> Cell& {
    return cells[(m * levels.size() + l) * buckets.size() + b];
  };

  BacktestResult res;
  std::deque<Vector> residuals;
  const long first = plan.train_length - 1;
  const bool need_dhf = std::any_of(methods.begin(), methods.end(), is_dhf);
  const SummingMatrix& s = h.summing();

  for (long origin = first; origin <= n_rows - 2; ++origin) {
    ++res.iterations;
    const auto priors = pipe.priors(exec);
    const auto exo_t = exo.issued_at(origin, hz);
    std::map<std::string, OriginForecast> recon;
    if (need_dhf) recon = pipe.forecast(priors, exo_t, exec);

    std::vector<FilledForecast> filled(static_cast<std::size_t>(hz));
    for (int j = 0; j < hz; ++j) filled[static_cast<std::size_t>(j)] = fill_forecast(h, priors[static_cast<std::size_t>(j)], exo_t[static_cast<std::size_t>(j)]);

    const bool scored = origin >= first + plan.warmup && (origin - first - plan.warmup) % plan.eval_every == 0;
    if (scored || on_origin) {
      if (scored) ++res.scored_origins;
      OriginOutput out;
      out.origin = origin;
      out.methods = methods;
      out.forecasts.resize(methods.size());
      const Matrix res_full = window_matrix(residuals, 0, h.size());
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        auto& fm = out.forecasts[mi];
        fm.resize(static_cast<std::size_t>(hz));
        const Method m = methods[mi];
        std::optional<Mint> mint;
        try {
          if (m == Method::mint_ols) mint.emplace(Mint::ols(s));
          if (m == Method::mint_wls || m == Method::mint_shrink) {
            if (res_full.rows() < 2) throw NumericalError("not enough residuals for MinT");
            if (m == Method::mint_wls) mint.emplace(Mint::wls(s, positive_variances(shrink_cov(res_full).var)));
            else mint.emplace(Mint::shrink(s, res_full));
          }
        } catch (const NumericalError&) {
          res.failures += hz;
          continue;
        }
        std::optional<StructuredCovariance> mint_cov;
        if (mint) mint_cov = StructuredCovariance::from_dense(mint->base_cov());
        for (int j = 0; j < hz; ++j) {
          const auto& prior = priors[static_cast<std::size_t>(j)];
          const auto& ff = filled[static_cast<std::size_t>(j)];
          try {
            switch (m) {
              case Method::mrdlm:
                fm[static_cast<std::size_t>(j)] = ReconciledForecast{prior.mean, StructuredCovariance::from_factor(prior)};
                break;
              case Method::dhf:
              case Method::dhf_2step:
              case Method::dhf_hier:
                fm[static_cast<std::size_t>(j)] = recon.at(method_name(m)).base[static_cast<std::size_t>(j)];
                break;
              case Method::bu_diag: {
                const auto bu = bottom_up(s, ff.mean.tail(nb), positive_variances(ff.var.tail(nb)));
                fm[static_cast<std::size_t>(j)] = ReconciledForecast{bu.base_mean, bu.base_cov};
                break;
              }
              case Method::bu_shrink: {
                if (res_full.rows() < 2) throw NumericalError("not enough residuals for BU-Shrink");
                const auto bu = bottom_up_shrink(s, ff.mean.tail(nb), positive_variances(ff.var.tail(nb)),
                                                 res_full.rightCols(nb));
                fm[static_cast<std::size_t>(j)] = ReconciledForecast{bu.base_mean, bu.base_cov};
                break;
              }
              case Method::mint_ols:
              case Method::mint_wls:
              case Method::mint_shrink:
                fm[static_cast<std::size_t>(j)] = ReconciledForecast{mint->reconcile_base(ff.mean), *mint_cov};
                break;
            }
          } catch (const NumericalError&) {
            ++res.failures;
          }
        }
      }
      if (on_origin) on_origin(out);

      if (scored) {
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
          for (int j = 1; j <= hz && origin + j <= n_rows - 1; ++j) {
            const int b = bucket_of[static_cast<std::size_t>(j)];
            if (b < 0) continue;
            const auto& f = out.forecasts[mi][static_cast<std::size_t>(j - 1)];
            if (!f) continue;
            for (std::size_t l = 0; l < levels.size(); ++l) {
              Cell& c = cell(mi, l, static_cast<std::size_t>(b));
              const Vector mean = level_r[l] * f->mean;
              Vector actual(mean.size());
              for (Index r = 0; r < mean.size(); ++r) actual[r] = y(origin + j, level_series[l][static_cast<std::size_t>(r)]);
              bool complete = true;
              for (Index r = 0; r < mean.size(); ++r) {
                const double e = mean[r] - actual[r];
                if (std::isfinite(e)) {
                  c.sse += e * e;
                  ++c.n_err;
                } else {
                  complete = false;
                }
              }
              if (!complete) continue;
              try {
                const auto cov = f->cov.transform(level_r[l]);
                const auto sc = gaussian_scores(mean, cov, actual);
                if (!std::isfinite(sc.log_score) || !std::isfinite(sc.dss)) continue;
                const double err = std::abs(sc.dss - dss_from_log_score(sc.log_score, mean.size()));
                res.max_identity_error = std::max(res.max_identity_error, err);
                const double nl = static_cast<double>(mean.size());
                c.ls += sc.log_score / nl;
                c.ds += sc.dss / nl;
                ++c.n_score;
              } catch (const NumericalError&) {
                ++res.failures;
              }
            }
          }
        }
      }
    }

    // One-step residuals of the filled exogenous forecasts feed MinT and
    // BU-Shrink at later origins.
    pipe.observe(origin + 1, y.row(origin + 1).transpose(), exec);
    residuals.push_back(y.row(origin + 1).transpose() - filled[0].mean);
    while (static_cast<long>(residuals.size()) > plan.residual_window) residuals.pop_front();
  }

  std::vector<std::string> bucket_labels;
  for (const auto& b : buckets) bucket_labels.push_back(b.label);
  for (Metric metric : {Metric::rmse, Metric::log_score, Metric::dss}) {
    ScoreTable tab(metric, names, levels, bucket_labels);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      for (std::size_t l = 0; l < levels.size(); ++l) {
        for (std::size_t b = 0; b < buckets.size(); ++b) {
          const Cell& c = cell(mi, l, b);
          double v = kNaN;
          if (metric == Metric::rmse && c.n_err > 0) v = std::sqrt(c.sse / static_cast<double>(c.n_err));
          if (metric == Metric::log_score && c.n_score > 0) v = c.ls / static_cast<double>(c.n_score);
          if (metric == Metric::dss && c.n_score > 0) v = c.ds / static_cast<double>(c.n_score);
          tab.at(mi, l, b) = v;
        }
      }
    }
    res.tables.push_back(report_relative(std::move(tab), cfg.benchmark));
  }
  return res;
}

}  // namespace dhf
