#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dhf/combination.hpp"
#include "dhf/disaggregation.hpp"
#include "dhf/hierarchy.hpp"
#include "dhf/kernels.hpp"
#include "dhf/mrdlm.hpp"

namespace dhf {

enum class Method { bu_diag, bu_shrink, mint_ols, mint_wls, mint_shrink, mrdlm, dhf, dhf_2step, dhf_hier };

const std::string& method_name(Method m);
Method parse_method(const std::string& name);
const std::vector<Method>& all_methods();

/// Either a flat or a pooled combination regression.
class CombinationModel {
 public:
  CombinationModel() = default;
  CombinationModel(WeightLayout layout, const CombinationConfig& cfg, bool pooled);

  bool pooled() const { return pooled_; }
  void update(const RegressorPanel& panel, const GaussianFactorMoments& prior, const Vector& b);
  ReconciledForecast forecast(const RegressorPanel& panel, const GaussianFactorMoments& prior, int steps) const;
  std::vector<WeightRecord> weights() const;

  FlatCombination& flat() { return flat_; }
  HierCombination& hier() { return hier_; }
  const FlatCombination& flat() const { return flat_; }
  const HierCombination& hier() const { return hier_; }

 private:
  bool pooled_ = false;
  FlatCombination flat_;
  HierCombination hier_;
};

struct ReconcilerConfig {
  /// One-step model, or the upper sub-hierarchy in the two-step scheme.
  CombinationConfig upper;
  /// Lower sub-hierarchies in the two-step scheme.
  CombinationConfig lower;
  /// Empty for one-step reconciliation.
  std::string boundary_level;
  std::map<std::string, Side> assignment_overrides;
  /// Pooled (hierarchical prior) weights: on the lowers in the two-step
  /// scheme, on the whole hierarchy otherwise.
  bool pooled = false;
};

/// Everything a forecast used, kept so the weights can later be trained
/// against the realised outcome.
struct ForecastRecord {
  GaussianFactorMoments prior;
  RegressorPanel panel;  // one-step panel, or the full-hierarchy panel
  GaussianFactorMoments upper_prior;
  RegressorPanel upper_panel;
  std::vector<GaussianFactorMoments> lower_priors;
  std::vector<RegressorPanel> lower_panels;
};

/// One-step or two-step reconciliation of base-level priors with
/// exogenous forecasts.
class Reconciler {
 public:
  Reconciler(const Hierarchy& h, ReconcilerConfig cfg);

  bool two_step() const { return two_step_; }
  const ReconcilerConfig& config() const { return cfg_; }
  const SubHierarchyPartition& partition() const { return part_; }

  /// Builds panels, forecasts `steps` periods past the last weight update
  /// and returns the reconciled base-level forecast. `record` receives the
  /// inputs for a later update.
  ReconciledForecast forecast(const GaussianFactorMoments& prior, std::span<const ExoValue> exo, int steps,
                              ForecastRecord* record = nullptr, Exec exec = default_exec());

  /// Trains the weights on base outcomes `b` using a stored record.
  void update(const ForecastRecord& record, const Vector& b, Exec exec = default_exec());

  /// Combination models: index 0 is the one-step or upper model, lowers
  /// follow. Models are created on first use.
  const std::vector<std::optional<CombinationModel>>& models() const { return models_; }
  std::vector<std::optional<CombinationModel>>& models() { return models_; }

  /// Weight records with `series` set to the hierarchy series index (the
  /// boundary series for upper weights in the two-step scheme).
  std::vector<WeightRecord> weights() const;

 private:
  void build_records(const GaussianFactorMoments& prior, std::span<const ExoValue> exo,
                     ForecastRecord& rec) const;
  GaussianFactorMoments upper_prior(const GaussianFactorMoments& prior) const;
  CombinationModel& model(std::size_t k, const RegressorPanel& panel, const CombinationConfig& cfg, bool pooled);

  const Hierarchy* h_;
  ReconcilerConfig cfg_;
  bool two_step_ = false;
  SlotLayout full_layout_;
  SubHierarchyPartition part_;
  SlotLayout upper_layout_;
  std::vector<Index> lower_slots_;       // full-layout slots used by lowers
  std::vector<std::string> lower_names_;
  std::vector<Index> lower_root_;        // boundary node index inside each lower
  std::vector<Index> upper_to_lower_;    // upper base index -> lower index
  std::vector<Index> upper_index_;       // original series -> upper index or -1
  std::vector<std::optional<CombinationModel>> models_;
};

/// Top-level settings for the forecasting pipeline.
struct PipelineConfig {
  MrdlmConfig mrdlm;
  /// Series used as factors; empty selects the children of the roots.
  std::vector<std::string> factor_ids;
  ReconcilerConfig reconcile;
  int horizon = 12;
};

/// Factor series chosen by default: the aggregate children of every root,
/// or the roots themselves when those children are all base series.
std::vector<Index> default_factors(const Hierarchy& h);

/// Output of one forecast origin.
struct OriginForecast {
  long origin = 0;
  std::vector<ReconciledForecast> base;  // per horizon
};

/// MRDLM plus any number of reconcilers driven through time. Rows of the
/// data panel are times, columns all n series in hierarchy order.
class Pipeline {
 public:
  Pipeline(const Hierarchy& h, PipelineConfig cfg);

  /// Fits the initial MRDLM on the first init_window rows (or fewer when
  /// `rows` is smaller) and returns the index of the last row consumed.
  long initialize(const Matrix& y, long rows);

  /// Registers a reconciler under a name (e.g. "dhf", "dhf-2step").
  void add_reconciler(const std::string& name, ReconcilerConfig cfg);

  /// Consumes row `t`: trains every reconciler on it using the forecasts
  /// stored at the latest origin, then updates the MRDLM.
  void observe(long t, const Eigen::Ref<const Vector>& y_row, Exec exec = default_exec());

  /// Priors for horizons 1..horizon at the current origin.
  std::vector<GaussianFactorMoments> priors(Exec exec = default_exec()) const;

  /// Forecasts from the current origin for every registered reconciler.
  /// `exo[j]` holds the forecasts for horizon j + 1. Records are stored for
  /// training when later rows arrive.
  std::map<std::string, OriginForecast> forecast(const std::vector<GaussianFactorMoments>& priors,
                                                 const std::vector<std::vector<ExoValue>>& exo,
                                                 Exec exec = default_exec());

  const Hierarchy& hierarchy() const { return *h_; }
  const PipelineConfig& config() const { return cfg_; }
  const Mrdlm& mrdlm() const { return model_; }
  Mrdlm& mrdlm() { return model_; }
  void set_mrdlm(Mrdlm m) { model_ = std::move(m); }
  const std::vector<Index>& factor_series() const { return factors_; }
  long last_row() const { return last_row_; }
  void set_last_row(long t) { last_row_ = t; }
  Reconciler& reconciler(const std::string& name);
  const std::map<std::string, Reconciler>& reconcilers() const { return reconcilers_; }

 private:
  const Hierarchy* h_;
  PipelineConfig cfg_;
  std::vector<Index> factors_;
  Mrdlm model_;
  long last_row_ = -1;
  std::map<std::string, Reconciler> reconcilers_;
  // Records of the latest origin, per reconciler and horizon.
  long record_origin_ = -1;
  std::map<std::string, std::vector<ForecastRecord>> records_;
};

}  // namespace dhf
