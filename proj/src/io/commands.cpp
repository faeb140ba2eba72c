#include "dhf/io/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dhf/errors.hpp"
#include "dhf/factor_cov.hpp"
#include "dhf/io/checkpoint.hpp"
#include "dhf/io/csv.hpp"
#include "dhf/pipeline.hpp"
#include "dhf/scoring.hpp"

namespace dhf::io {

namespace {

std::string require(const std::optional<std::string>& v, const char* flag) {
  if (!v || v->empty()) throw DataError(std::string("missing required option ") + flag);
  return *v;
}

// Writes `text` to the --out path, or to `fallback`.
void emit(const std::optional<std::string>& path, const std::string& text, std::ostream& fallback) {
  if (!path) {
    fallback << text;
    return;
  }
  std::ofstream f(*path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write '" + *path + "'");
  f << text;
}

// Variances of every series under a base covariance.
Vector full_variances(const Hierarchy& h, const StructuredCovariance& cov) {
  Vector v(h.size());
  const Vector base = cov.variances();
  v.tail(h.n_base()) = base;
  for (Index i = 0; i < h.n_aggregates(); ++i) v[i] = cov.quad_form(h.summing().row(i));
  return v;
}

void append_rows(std::vector<ForecastRow>& rows, const Hierarchy& h, int horizon, const Vector& mean,
                 const Vector& var) {
  for (Index i = 0; i < h.size(); ++i) rows.push_back({h.id(i), horizon, mean[i], var[i]});
}

struct Loaded {
  Hierarchy h;
  Checkpoint ck;
};

Loaded load_checkpoint(const CommandOptions& opt) {
  Loaded l;
  l.ck = read_checkpoint_file(require(opt.checkpoint, "--checkpoint"));
  l.h = Hierarchy::build(l.ck.edges);
  if (l.ck.model.n_base() != l.h.n_base()) throw DataError("checkpoint model does not match its hierarchy");
  return l;
}

int horizon_of(const CommandOptions& opt, const RunConfig& cfg) {
  const int hz = opt.horizon.value_or(cfg.pipeline.horizon);
  if (hz < 1) throw DataError("--horizon must be at least 1");
  return hz;
}

}  // namespace

std::string weights_path(const std::string& out_path) {
  const std::string suffix = ".csv";
  if (out_path.size() > suffix.size() && out_path.compare(out_path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return out_path.substr(0, out_path.size() - suffix.size()) + ".weights.csv";
  }
  return out_path + ".weights.csv";
}

RunConfig load_run_config(const CommandOptions& opt) {
  RunConfig cfg = opt.config ? read_config_file(*opt.config) : RunConfig{};
  if (opt.data) cfg.data_path = opt.data;
  if (opt.hierarchy) cfg.hierarchy_path = opt.hierarchy;
  if (opt.exo) cfg.exo_path = opt.exo;
  if (opt.horizon) {
    if (*opt.horizon < 1) throw DataError("--horizon must be at least 1");
    cfg.pipeline.horizon = *opt.horizon;
    cfg.plan.horizon = *opt.horizon;
  }
  if (opt.benchmark) cfg.benchmark = *opt.benchmark;
  if (opt.seed) cfg.seed = *opt.seed;
  return cfg;
}

FitSummary cmd_fit(const CommandOptions& opt, std::ostream& log) {
  const RunConfig cfg = load_run_config(opt);
  const Hierarchy h = read_hierarchy_file(require(cfg.hierarchy_path, "--hierarchy"));
  const SeriesPanel panel = read_panel_file(require(cfg.data_path, "--data"));
  const Matrix y = align_panel(panel, h);
  const std::string ck_path = require(opt.checkpoint, "--checkpoint");

  Pipeline pipe(h, cfg.pipeline);
  long t = pipe.initialize(y, static_cast<long>(y.rows()));
  while (t + 1 < static_cast<long>(y.rows())) {
    ++t;
    pipe.observe(t, y.row(t).transpose());
  }

  Checkpoint ck;
  ck.edges = h.edges();
  ck.config_json = config_to_json(cfg);
  for (Index f : pipe.factor_series()) ck.factor_ids.push_back(h.id(f));
  ck.last_time = panel.times.back();
  ck.last_row = t;
  ck.model = pipe.mrdlm();
  write_checkpoint_file(ck_path, ck);

  FitSummary s{h.size(), h.n_aggregates(), h.n_base(), pipe.mrdlm().n_factors(), pipe.mrdlm().steps()};
  log << "n=" << s.n << " n_a=" << s.n_aggregates << " n_b=" << s.n_base << " n_x=" << s.n_factors
      << " steps=" << s.steps << '\n';
  return s;
}

void cmd_forecast(const CommandOptions& opt, std::ostream& out, std::ostream& /*log*/) {
  const Loaded l = load_checkpoint(opt);
  const RunConfig cfg = parse_config(l.ck.config_json);
  const int hz = horizon_of(opt, cfg);
  const auto priors = l.ck.model.assemble_prior(hz);
  std::vector<ForecastRow> rows;
  for (int j = 0; j < hz; ++j) {
    const auto hm = project(priors[static_cast<std::size_t>(j)], l.h.summing());
    append_rows(rows, l.h, j + 1, hm.mean(), hm.variances());
  }
  std::ostringstream os;
  write_forecasts(os, rows);
  emit(opt.out, os.str(), out);
}

void cmd_reconcile(const CommandOptions& opt, std::ostream& out, std::ostream& log) {
  const Loaded l = load_checkpoint(opt);
  RunConfig cfg = parse_config(l.ck.config_json);
  if (opt.config) {
    // Reconciliation settings may be changed after fitting.
    cfg.pipeline.reconcile = read_config_file(*opt.config).pipeline.reconcile;
  }
  const int hz = horizon_of(opt, cfg);
  const std::optional<std::string> exo_path = opt.exo ? opt.exo : cfg.exo_path;
  if (!exo_path) {
    cmd_forecast(opt, out, log);
    return;
  }

  std::vector<std::vector<ExoValue>> exo(static_cast<std::size_t>(hz));
  const auto rows = read_exo_file(*exo_path);
  long skipped = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto id = l.h.find(rows[r].series_id);
    if (!id) throw DataError("exo row " + std::to_string(r + 1) + ": unknown series '" + rows[r].series_id + "'");
    if (rows[r].origin_time != l.ck.last_time || rows[r].horizon > hz) {
      ++skipped;
      continue;
    }
    exo[static_cast<std::size_t>(rows[r].horizon - 1)].push_back({*id, rows[r].mean, rows[r].variance});
  }
  if (skipped > 0) log << "ignored " << skipped << " exogenous rows not issued at '" << l.ck.last_time << "' or beyond the horizon\n";

  const auto priors = l.ck.model.assemble_prior(hz);
  Reconciler rec(l.h, cfg.pipeline.reconcile);
  std::vector<ForecastRow> out_rows;
  for (int j = 0; j < hz; ++j) {
    const auto f = rec.forecast(priors[static_cast<std::size_t>(j)], exo[static_cast<std::size_t>(j)], j + 1);
    append_rows(out_rows, l.h, j + 1, l.h.summing().apply(f.mean), full_variances(l.h, f.cov));
  }
  std::ostringstream os;
  write_forecasts(os, out_rows);
  emit(opt.out, os.str(), out);

  if (opt.out) {
    std::vector<WeightRow> wrows;
    for (const auto& w : rec.weights()) wrows.push_back({l.ck.last_time, l.h.id(w.series), w.slot, w.mean, w.sd});
    const std::string wp = weights_path(*opt.out);
    const bool fresh = !std::filesystem::exists(wp) || std::filesystem::file_size(wp) == 0;
    std::ofstream wf(wp, std::ios::binary | std::ios::app);
    if (!wf) throw DataError("cannot write '" + wp + "'");
    write_weights(wf, wrows, fresh);
  }
}

BacktestResult cmd_backtest(const CommandOptions& opt, std::ostream& out, std::ostream& report, std::ostream& log) {
  const RunConfig cfg = load_run_config(opt);
  const Hierarchy h = read_hierarchy_file(require(cfg.hierarchy_path, "--hierarchy"));
  const SeriesPanel panel = read_panel_file(require(cfg.data_path, "--data"));
  const Matrix y = align_panel(panel, h);

  BacktestPlan plan = cfg.plan;
  plan.horizon = cfg.pipeline.horizon;
  plan.buckets = cfg.bucket_width > 1 ? grouped_buckets(plan.horizon, cfg.bucket_width) : horizon_buckets(plan.horizon);
  ExoStream exo;
  if (cfg.exo_path) {
    exo = make_exo_stream(h, resolve_exo(read_exo_file(*cfg.exo_path), panel.times));
  } else {
    log << "no exogenous forecasts given; using seasonal means\n";
    exo = seasonal_mean_exo(h, y, plan.train_length - 1, static_cast<long>(y.rows()) - 2, plan.horizon,
                            std::max(cfg.pipeline.mrdlm.period, 1));
  }
  const BacktestResult res = backtest(h, y, exo, plan, backtest_config(cfg));
  log << "origins=" << res.iterations << " scored=" << res.scored_origins << " failures=" << res.failures << '\n';

  std::ostringstream csv;
  for (std::size_t k = 0; k < res.tables.size(); ++k) {
    std::string body = render_csv(res.tables[k]);
    if (k > 0) body = body.substr(body.find('\n') + 1);
    csv << body;
    report << render_text(res.tables[k]) << '\n';
  }
  emit(opt.out, csv.str(), out);
  return res;
}

void cmd_score(const CommandOptions& opt, std::ostream& out, std::ostream& report) {
  const RunConfig cfg = load_run_config(opt);
  const Hierarchy h = read_hierarchy_file(require(cfg.hierarchy_path, "--hierarchy"));
  const SeriesPanel panel = read_panel_file(require(cfg.data_path, "--data"));
  const Matrix y = align_panel(panel, h);
  std::ifstream fin(require(opt.input, "forecast file"));
  if (!fin) throw DataError("cannot open '" + *opt.input + "'");
  const auto rows = read_forecasts(fin, *opt.input);

  int hz = 0;
  for (const auto& r : rows) hz = std::max(hz, r.horizon);
  if (hz > y.rows()) throw DataError("forecast horizon exceeds the rows of the actuals");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Matrix mean = Matrix::Constant(hz, h.size(), nan);
  Matrix var = Matrix::Constant(hz, h.size(), nan);
  for (const auto& r : rows) {
    const Index i = h.index_of(r.series_id);
    mean(r.horizon - 1, i) = r.mean;
    var(r.horizon - 1, i) = r.variance;
  }

  const auto& levels = h.level_names();
  std::vector<std::string> hl;
  for (int j = 1; j <= hz; ++j) hl.push_back("h" + std::to_string(j));
  ScoreTable tr(Metric::rmse, {"forecast"}, levels, hl);
  ScoreTable tl(Metric::log_score, {"forecast"}, levels, hl);
  ScoreTable td(Metric::dss, {"forecast"}, levels, hl);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const auto series = h.series_in_level(levels[l]);
    for (int j = 0; j < hz; ++j) {
      Matrix p(1, static_cast<Index>(series.size())), a(1, static_cast<Index>(series.size()));
      Vector m(static_cast<Index>(series.size())), v(m.size()), x(m.size());
      for (std::size_t k = 0; k < series.size(); ++k) {
        p(0, static_cast<Index>(k)) = m[static_cast<Index>(k)] = mean(j, series[k]);
        a(0, static_cast<Index>(k)) = x[static_cast<Index>(k)] = y(j, series[k]);
        v[static_cast<Index>(k)] = var(j, series[k]);
      }
      try {
        tr.at(0, l, static_cast<std::size_t>(j)) = rmse(p, a);
      } catch (const DataError&) {
      }
      if (m.allFinite() && x.allFinite() && v.allFinite() && v.minCoeff() > 0.0) {
        const StructuredCovariance cov(Matrix::Zero(m.size(), 0), Matrix::Zero(0, 0), v, {});
        const auto sc = gaussian_scores(m, cov, x);
        tl.at(0, l, static_cast<std::size_t>(j)) = sc.log_score / static_cast<double>(m.size());
        td.at(0, l, static_cast<std::size_t>(j)) = sc.dss / static_cast<double>(m.size());
      }
    }
  }
  std::ostringstream csv;
  bool first = true;
  for (auto* t : {&tr, &tl, &td}) {
    *t = report_relative(std::move(*t), "forecast");
    std::string body = render_csv(*t);
    if (!first) body = body.substr(body.find('\n') + 1);
    first = false;
    csv << body;
    t->relative.clear();  // absolute values read better for a single method
    report << render_text(*t) << '\n';
  }
  emit(opt.out, csv.str(), out);
}

}  // namespace dhf::io
