#pragma once

// Comparisons of library algorithms against the dense oracles, shared by the
// unit tests (few draws) and the acceptance binary (full counts).

#include <random>

#include "dhf/baselines.hpp"
#include "dhf/combination.hpp"
#include "dhf/dlm.hpp"
#include "dhf/pipeline.hpp"
#include "oracles.hpp"

namespace checks {

using dhf::Index;
using dhf::Matrix;
using dhf::Vector;

struct DlmDiff {
  double m = 0.0;
  double c = 0.0;
  double f = 0.0;
  double q = 0.0;
  double max() const { return std::max(std::max(m, c), std::max(f, q)); }
};

/// Runs one random model through the SVD filter and the dense filter for
/// `steps` observations and returns the largest absolute differences.
inline DlmDiff dlm_vs_kalman(std::mt19937_64& rng, int steps) {
  const dhf::DlmSpec spec = oracle::random_spec(rng);
  const Index p = spec.dim();
  const Vector m0 = oracle::randn(rng, p);
  const Matrix c0 = oracle::random_spd(rng, p, 0.2);
  const double n0 = oracle::uniform(rng, 1.0, 5.0);
  const double d0 = n0 * oracle::uniform(rng, 0.5, 2.0);
  dhf::UnivariateDlm dlm(spec, dhf::SvdState::from_cov(m0, c0), {n0, d0});
  auto kf = oracle::kalman_for(spec, m0, c0, n0, d0);

  DlmDiff diff;
  double level = 0.0;
  for (int t = 0; t < steps; ++t) {
    const Vector x = oracle::randn(rng, spec.n_regressors());
    level += 0.3 * oracle::randn(rng, 1)[0];
    const double y = level + 2.0 * std::sin(0.7 * t) + x.sum() + oracle::randn(rng, 1)[0];
    const auto sf = dlm.step(y, x.size() ? &x : nullptr);
    const auto kr = kf.step(dhf::design_vector(spec, x.size() ? &x : nullptr), y);
    diff.f = std::max(diff.f, std::abs(sf.f - kr.f));
    diff.q = std::max(diff.q, std::abs(sf.q - kr.q));
    diff.m = std::max(diff.m, oracle::max_abs(dlm.state().m, kf.m));
    diff.c = std::max(diff.c, oracle::max_abs(dlm.state().cov(), kf.c));
  }
  return diff;
}

/// A base-level regression problem: hierarchy, slot pattern and per-step
/// inputs for the combination models.
struct CombinationProblem {
  dhf::Hierarchy h;
  dhf::WeightLayout layout;
  std::vector<dhf::Index> slot_of_position;
  dhf::CombinationConfig cfg;
  Index nx = 2;

  dhf::RegressorPanel panel(std::mt19937_64& rng, const dhf::GaussianFactorMoments& prior, bool with_h) const {
    dhf::RegressorPanel p;
    p.slot_names = layout.slot_names;
    p.prior_mean = prior.mean;
    const Index nb = layout.n_base();
    p.mean = Matrix::Constant(nb, layout.n_slots(), std::nan(""));
    p.var = Matrix::Constant(nb, layout.n_slots(), std::nan(""));
    for (Index i = 0; i < nb; ++i) {
      for (Index s : layout.slots[static_cast<std::size_t>(i)]) {
        p.mean(i, s) = prior.mean[i] + oracle::randn(rng, 1)[0];
        p.var(i, s) = with_h ? oracle::uniform(rng, 0.0, 0.5) : 0.0;
      }
    }
    return p;
  }

  /// X with rows per base series and columns per state position.
  Matrix design(const dhf::RegressorPanel& p) const {
    Matrix x = Matrix::Zero(layout.n_base(), layout.dim);
    for (Index q = 0; q < layout.dim; ++q) {
      const Index i = layout.position_series[static_cast<std::size_t>(q)];
      const Index s = layout.position_slot[static_cast<std::size_t>(q)];
      x(i, q) = p.mean(i, s) - (cfg.offset ? p.prior_mean[i] : 0.0);
    }
    return x;
  }

  /// F_h: state position -> shared slot.
  Matrix selection() const {
    Matrix f = Matrix::Zero(layout.dim, layout.n_slots());
    for (Index q = 0; q < layout.dim; ++q) f(q, layout.position_slot[static_cast<std::size_t>(q)]) = 1.0;
    return f;
  }
};

/// Random hierarchy (n <= 30) with a random non-empty slot pattern.
inline CombinationProblem combination_problem(std::mt19937_64& rng) {
  CombinationProblem pr;
  pr.h = dhf::Hierarchy::build(oracle::random_tree(rng, oracle::uniform_int(rng, 2, 3), 12));
  while (pr.h.size() > 30) pr.h = dhf::Hierarchy::build(oracle::random_tree(rng, 2, 12));
  const auto sl = dhf::slot_layout(pr.h);
  std::vector<std::vector<Index>> slots(static_cast<std::size_t>(pr.h.n_base()));
  for (Index i = 0; i < pr.h.n_base(); ++i) {
    auto& own = slots[static_cast<std::size_t>(i)];
    for (Index s : sl.slot_of[static_cast<std::size_t>(i)])
      if (oracle::uniform_int(rng, 0, 3) != 0) own.push_back(s);
    if (own.empty()) own.push_back(sl.slot_of[static_cast<std::size_t>(i)].back());
    std::sort(own.begin(), own.end());
  }
  pr.layout = dhf::WeightLayout::from_slots(sl.names, slots);
  pr.cfg.discount = oracle::uniform(rng, 0.9, 1.0);
  pr.cfg.divisor = oracle::uniform(rng, 0.5, 2.0);
  pr.nx = oracle::uniform_int(rng, 1, 3);
  return pr;
}

/// FlatCombination over `steps` updates (H = 0) against the stacked
/// observation DLM on (S b, S X, S Q S'). Returns the largest difference in
/// the weight mean and covariance.
inline double flat_vs_stacked(std::mt19937_64& rng, int steps) {
  const CombinationProblem pr = combination_problem(rng);
  dhf::FlatCombination model(pr.layout, pr.cfg);
  Vector m = model.mean();
  Matrix c = model.cov();
  const Matrix s = pr.h.summing().dense();
  double diff = 0.0;
  for (int t = 0; t < steps; ++t) {
    const auto prior = oracle::random_moments(rng, pr.h.n_base(), pr.nx);
    const auto panel = pr.panel(rng, prior, false);
    const Vector b = prior.mean + oracle::randn(rng, pr.h.n_base());
    model.update(panel, prior, b);
    const Matrix x = pr.design(panel);
    oracle::stacked_update(m, c, pr.cfg.discount, s * x, s * (b - prior.mean), s * oracle::dense(prior) * s.transpose());
    diff = std::max({diff, oracle::max_abs(model.mean(), m), oracle::max_abs(model.cov(), c)});
  }
  return diff;
}

/// Flat forecast moments against the dense expectation of b = f + x'theta
/// with independent regressors x ~ (h, H) and weights theta ~ (m, R).
inline double flat_forecast_vs_moments(std::mt19937_64& rng) {
  CombinationProblem pr = combination_problem(rng);
  if (oracle::uniform_int(rng, 0, 1)) pr.cfg.nu = oracle::uniform(rng, 3.0, 30.0);
  dhf::FlatCombination model(pr.layout, pr.cfg);
  const Index dim = pr.layout.dim;
  const Matrix a = oracle::randn(rng, dim, dim);
  model.set_state(oracle::randn(rng, dim), a * a.transpose() / static_cast<double>(dim));
  const auto prior = oracle::random_moments(rng, pr.h.n_base(), pr.nx);
  const auto panel = pr.panel(rng, prior, true);
  const auto fc = model.forecast(panel, prior, 1);
  const Matrix x = pr.design(panel);
  const Matrix r = model.cov() / pr.cfg.discount;
  const Vector& m = model.mean();
  // Exact variance of h'theta for independent h and theta, then the
  // linear-Bayes reduction of the prior covariance by m'Hm.
  Matrix var_ht = x * r * x.transpose();
  Vector mhm = Vector::Zero(pr.h.n_base());
  for (Index q = 0; q < dim; ++q) {
    const Index i = pr.layout.position_series[static_cast<std::size_t>(q)];
    const double hv = panel.var(i, pr.layout.position_slot[static_cast<std::size_t>(q)]);
    var_ht(i, i) += hv * (m[q] * m[q] + r(q, q));
    mhm[i] += hv * m[q] * m[q];
  }
  const double c = std::isinf(pr.cfg.nu) ? 1.0 : pr.cfg.nu / (pr.cfg.nu - 2.0);
  // Q = c [Qbar - m'Hm + (Var(h'theta) - m'Hm)] + m'Hm
  Matrix want = c * (oracle::dense(prior) + var_ht);
  want.diagonal() += (1.0 - 2.0 * c) * mhm;
  const Vector want_mean = prior.mean + x * m;
  return std::max(oracle::rel_err(fc.mean, want_mean), oracle::rel_err(fc.cov.dense(), want));
}

/// HierCombination with zero deviation variance against a flat regression
/// on the shared weights alone. Returns the largest difference in the
/// shared moments and the implied series weights.
inline double hier_vs_pooled(std::mt19937_64& rng, int steps) {
  const CombinationProblem pr = combination_problem(rng);
  dhf::HierCombination model(pr.layout, pr.cfg, Vector::Zero(pr.layout.dim));
  Vector m = model.shared_mean();
  Matrix c = model.shared_cov();
  const Matrix fh = pr.selection();
  double diff = 0.0;
  for (int t = 0; t < steps; ++t) {
    const auto prior = oracle::random_moments(rng, pr.h.n_base(), pr.nx);
    const auto panel = pr.panel(rng, prior, false);
    const Vector b = prior.mean + oracle::randn(rng, pr.h.n_base());
    model.update(panel, prior, b);
    const Matrix x = pr.design(panel) * fh;
    oracle::stacked_update(m, c, pr.cfg.discount, x, b - prior.mean, oracle::dense(prior));
    diff = std::max({diff, oracle::max_abs(model.shared_mean(), m), oracle::max_abs(model.shared_cov(), c),
                     oracle::max_abs(model.series_mean(), fh * m)});
  }
  return diff;
}

struct MintDiff {
  double idempotence = 0.0;
  double projection = 0.0;
  bool fixed_point = true;
  double covariance = 0.0;
};

/// MinT properties on a random hierarchy with n <= 50.
inline MintDiff mint_checks(std::mt19937_64& rng) {
  dhf::Hierarchy h = dhf::Hierarchy::build(oracle::random_tree(rng, oracle::uniform_int(rng, 2, 4), 30));
  while (h.size() > 50) h = dhf::Hierarchy::build(oracle::random_tree(rng, 3, 20));
  const auto& ss = h.summing();
  const Matrix s = ss.dense();
  const Index n = h.size();
  MintDiff out;

  const Vector yhat = oracle::randn(rng, n);
  const auto ols = dhf::Mint::ols(ss);
  const Vector once = ols.reconcile(yhat);
  out.idempotence = oracle::max_abs(ols.reconcile(once), once);
  const Matrix sg = s * ols.g();
  out.idempotence = std::max(out.idempotence, oracle::max_abs(sg * sg, sg));
  const Matrix proj = s * (s.transpose() * s).inverse() * s.transpose();
  out.projection = oracle::max_abs(once, proj * yhat);

  const Vector b = oracle::randn(rng, h.n_base());
  const Vector y = ss.apply(b);
  const Matrix w = oracle::random_spd(rng, n, 0.2);
  const dhf::Mint gen(ss, w);
  out.fixed_point = ols.reconcile_base(y) == b && gen.reconcile_base(y) == b;

  const Matrix want = s * (s.transpose() * w.inverse() * s).inverse() * s.transpose();
  out.covariance = oracle::rel_err(gen.full_cov(), want);
  const Vector once_w = gen.reconcile(yhat);
  out.idempotence = std::max(out.idempotence, oracle::max_abs(gen.reconcile(once_w), once_w));
  const Matrix sgw = s * gen.g();
  out.idempotence = std::max(out.idempotence, oracle::max_abs(sgw * sgw, sgw));
  return out;
}

struct CoherenceStats {
  long outputs = 0;
  double worst = 0.0;  // relative violation
};

/// Drives one-step and two-step reconcilers through a simulated panel on a
/// random hierarchy and checks every reconciled output for coherence.
inline CoherenceStats coherence_run(std::mt19937_64& rng, int levels, int max_base) {
  const dhf::Hierarchy h = dhf::Hierarchy::build(oracle::random_tree(rng, levels, max_base));
  const Index nb = h.n_base();
  const long rows = 30;
  Matrix b(rows, nb);
  const Vector base_level = (oracle::randn(rng, nb).array().abs() + 5.0).matrix();
  for (long t = 0; t < rows; ++t)
    for (Index i = 0; i < nb; ++i) b(t, i) = base_level[i] + std::sin(1.57 * static_cast<double>(t)) + 0.5 * oracle::randn(rng, 1)[0];
  const Matrix y = dhf::aggregate(h.summing(), b);

  dhf::PipelineConfig pc;
  pc.mrdlm.period = 4;
  pc.mrdlm.init_window = 16;
  pc.horizon = 2;
  dhf::Pipeline pipe(h, pc);
  pipe.add_reconciler("one", {});
  dhf::ReconcilerConfig two;
  two.boundary_level = levels >= 3 ? "L1" : "L0";
  pipe.add_reconciler("two", two);
  dhf::ReconcilerConfig pooled;
  pooled.pooled = true;
  pipe.add_reconciler("pooled", pooled);

  CoherenceStats st;
  long t = pipe.initialize(y, 16);
  while (t < rows - 1) {
    const auto priors = pipe.priors();
    std::vector<std::vector<dhf::ExoValue>> exo(2);
    for (int j = 0; j < 2; ++j) {
      const long target = std::min<long>(t + j + 1, rows - 1);
      for (Index k = 0; k < h.size(); ++k)
        if (oracle::uniform_int(rng, 0, 4) != 0)
          exo[static_cast<std::size_t>(j)].push_back({k, y(target, k) + 0.3 * oracle::randn(rng, 1)[0], 0.2});
    }
    for (const auto& [name, of] : pipe.forecast(priors, exo)) {
      for (const auto& f : of.base) {
        const Vector full = h.summing().apply(f.mean);
        const double scale = std::max(1.0, full.cwiseAbs().maxCoeff());
        const auto rep = dhf::check_coherence(full, h.summing(), 1e-8 * scale);
        st.worst = std::max(st.worst, rep.max_violation / scale);
        if (!full.allFinite()) st.worst = std::numeric_limits<double>::infinity();
        ++st.outputs;
      }
    }
    ++t;
    pipe.observe(t, y.row(t).transpose());
  }
  return st;
}

}  // namespace checks
