#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dhf/types.hpp"

namespace dhf {

/// One row of a hierarchy edge list. An empty parent declares a root node
/// (useful to attach a level label to it). `level` labels the child.
struct Edge {
  std::string parent;
  std::string child;
  std::string level;
};

/// Summing matrix S (n x n_b). The first n_a rows form C; the last n_b rows
/// are the identity. Stored sparse, row-major.
class SummingMatrix {
 public:
  SummingMatrix() = default;
  SummingMatrix(SparseRowMatrix s, Index n_aggregates);

  Index rows() const { return s_.rows(); }
  Index cols() const { return s_.cols(); }
  Index n_aggregates() const { return n_a_; }

  const SparseRowMatrix& sparse() const { return s_; }
  Matrix dense() const { return Matrix(s_); }

  /// Row i as a dense n_b vector.
  Vector row(Index i) const;

  /// y = S b.
  Vector apply(const Eigen::Ref<const Vector>& b) const;
  /// Y = S B for a panel with base series in columns (T x n_b) -> T x n.
  Matrix apply_panel(const Eigen::Ref<const Matrix>& b_panel) const;

 private:
  SparseRowMatrix s_;
  Index n_a_ = 0;
};

/// Validated aggregation structure. Series are ordered aggregates first (by
/// depth, then first appearance) followed by base series (input order), so
/// y_t = [a_t; b_t]. Immutable after construction.
class Hierarchy {
 public:
  Hierarchy() = default;

  /// Builds and validates a hierarchy from parent->child edges. Base series
  /// are nodes that never appear as a parent. If `base_marker` is given it
  /// must agree with that structural rule.
  static Hierarchy build(std::span<const Edge> edges,
                         const std::function<bool(const std::string&)>& base_marker = {});

  /// Builds from explicit parts: `children[i]` indexes into `ids`, and the
  /// first `n_aggregates` ids are the aggregates in a topological order.
  static Hierarchy from_parts(std::vector<std::string> ids, std::vector<std::string> levels,
                              std::vector<std::vector<Index>> children, Index n_aggregates);

  Index size() const { return static_cast<Index>(ids_.size()); }
  Index n_aggregates() const { return n_a_; }
  Index n_base() const { return size() - n_a_; }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(Index i) const { return ids_[static_cast<std::size_t>(i)]; }
  const std::vector<std::string>& levels() const { return levels_; }
  const std::string& level(Index i) const { return levels_[static_cast<std::size_t>(i)]; }
  const std::vector<Index>& children(Index i) const { return children_[static_cast<std::size_t>(i)]; }
  int depth(Index i) const { return depth_[static_cast<std::size_t>(i)]; }

  std::optional<Index> find(const std::string& id) const;
  /// Throws DataError naming the id when absent.
  Index index_of(const std::string& id) const;

  bool is_base(Index i) const { return i >= n_a_; }
  /// Series index of base series `base_index`.
  Index base_series(Index base_index) const { return n_a_ + base_index; }

  const SummingMatrix& summing() const { return s_; }

  /// Base indices (columns of S) that series i sums over, ascending.
  std::span<const Index> support(Index series) const;

  /// Aggregates containing base series `base_index`, top level first, with
  /// the base series' own series index appended last.
  std::span<const Index> ancestors(Index base_index) const;

  /// Distinct level labels, ordered by the first series carrying them.
  const std::vector<std::string>& level_names() const { return level_names_; }
  std::vector<Index> series_in_level(const std::string& label) const;

  /// Edge list that rebuilds this hierarchy (root declarations included).
  std::vector<Edge> edges() const;

 private:
  void finalize();

  std::vector<std::string> ids_;
  std::vector<std::string> levels_;
  std::vector<std::vector<Index>> children_;
  std::vector<int> depth_;
  Index n_a_ = 0;
  std::unordered_map<std::string, Index> index_;
  SummingMatrix s_;
  std::vector<std::vector<Index>> support_;
  std::vector<std::vector<Index>> ancestors_;
  std::vector<std::string> level_names_;
};

/// Builds S for a hierarchy. Equivalent to `h.summing()`.
SummingMatrix summing_matrix(const Hierarchy& h);

/// Panel aggregation: rows are times, columns base series. Returns T x n.
Matrix aggregate(const SummingMatrix& s, const Eigen::Ref<const Matrix>& b_panel);

/// Series indices of the ancestors of base series `base_index`.
std::vector<Index> ancestors(const Hierarchy& h, Index base_index);

enum class Side { upper, lower };

/// A hierarchy split at a boundary level into an upper sub-hierarchy (whose
/// base series are the boundary series) and one lower sub-hierarchy per
/// boundary series.
struct SubHierarchyPartition {
  Hierarchy upper;
  std::vector<Hierarchy> lowers;
  std::string boundary_level;
  std::map<std::string, Side> forecast_assignment;

  /// Original series index of each upper series.
  std::vector<Index> upper_series;
  /// Original series index of each lower series, per lower.
  std::vector<std::vector<Index>> lower_series;
  /// Original base indices covered by each lower, in lower base order.
  std::vector<std::vector<Index>> lower_base;
  /// For each original base index, the lower hierarchy holding it.
  std::vector<Index> lower_of_base;
  /// Aggregates that nest in neither side (grouped structures).
  std::vector<Index> non_nesting;
  /// Boundary is the base level: lowers are single series, nothing to do.
  bool degenerate = false;
};

/// Splits `h` at `boundary_level`. Every base series must have exactly one
/// ancestor (or itself) at that level. `assignment_overrides` replaces the
/// default level->side mapping for the listed levels.
SubHierarchyPartition partition(const Hierarchy& h, const std::string& boundary_level,
                                const std::map<std::string, Side>& assignment_overrides = {});

struct CoherenceReport {
  bool coherent = true;
  double max_violation = 0.0;
};

/// Checks max_t |y_t - S * base(y_t)|_inf <= tol. Rows of `y_panel` are
/// times, columns are all n series in hierarchy order.
CoherenceReport check_coherence(const Matrix& y_panel, const SummingMatrix& s,
                                double tol);

/// Single-vector convenience.
CoherenceReport check_coherence(const Vector& y, const SummingMatrix& s,
                                double tol);

}  // namespace dhf
