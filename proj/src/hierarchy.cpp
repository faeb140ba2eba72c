#include "dhf/hierarchy.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "dhf/errors.hpp"

namespace dhf {

namespace {

constexpr const char* kBaseLevel = "base";

std::string default_level(int depth) { return "L" + std::to_string(depth); }

}  // namespace

// ---------------------------------------------------------------------------
// SummingMatrix

SummingMatrix::SummingMatrix(SparseRowMatrix s, Index n_aggregates)
    : s_(std::move(s)), n_a_(n_aggregates) {
  s_.makeCompressed();
}

Vector SummingMatrix::row(Index i) const {
  Vector r = Vector::Zero(s_.cols());
  for (SparseRowMatrix::InnerIterator it(s_, i); it; ++it) r[it.col()] = it.value();
  return r;
}

Vector SummingMatrix::apply(const Eigen::Ref<const Vector>& b) const {
  if (b.size() != s_.cols()) {
    throw DataError("aggregate: vector has " + std::to_string(b.size()) +
                    " entries, expected n_b=" + std::to_string(s_.cols()));
  }
  return s_ * b;
}

Matrix SummingMatrix::apply_panel(const Eigen::Ref<const Matrix>& b_panel) const {
  if (b_panel.cols() != s_.cols()) {
    throw DataError("aggregate: panel has " + std::to_string(b_panel.cols()) +
                    " columns, expected n_b=" + std::to_string(s_.cols()));
  }
  // (S B')' computed row-block wise through the sparse product.
  Matrix out = (s_ * b_panel.transpose()).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Hierarchy construction

Hierarchy Hierarchy::build(std::span<const Edge> edges,
                           const std::function<bool(const std::string&)>& base_marker) {
  if (edges.empty()) throw DataError("hierarchy: edge list is empty");

  std::vector<std::string> names;
  std::unordered_map<std::string, Index> local;
  std::vector<std::string> labels;
  auto intern = [&](const std::string& id) {
    auto [it, inserted] = local.emplace(id, static_cast<Index>(names.size()));
    if (inserted) {
      names.push_back(id);
      labels.emplace_back();
    }
    return it->second;
  };

  std::vector<std::pair<Index, Index>> pairs;
  std::set<std::pair<Index, Index>> seen;
  for (const Edge& e : edges) {
    if (e.child.empty()) throw DataError("hierarchy: edge with empty child id");
    const Index c = intern(e.child);
    if (!e.level.empty()) {
      std::string& lab = labels[static_cast<std::size_t>(c)];
      if (!lab.empty() && lab != e.level) {
        throw DataError("hierarchy: duplicate id '" + e.child + "' with conflicting levels '" +
                        lab + "' and '" + e.level + "'");
      }
      lab = e.level;
    }
    if (e.parent.empty()) continue;
    const Index p = intern(e.parent);
    if (!seen.emplace(p, c).second) {
      throw DataError("hierarchy: duplicate edge " + e.parent + " -> " + e.child);
    }
    pairs.emplace_back(p, c);
  }

  const auto n = static_cast<std::size_t>(names.size());
  std::vector<std::vector<Index>> kids(n), parents(n);
  for (auto [p, c] : pairs) {
    kids[static_cast<std::size_t>(p)].push_back(c);
    parents[static_cast<std::size_t>(c)].push_back(p);
  }

  // Kahn's algorithm; anything left over sits on a cycle.
  std::vector<int> indeg(n, 0), depth(n, 0);
  for (std::size_t i = 0; i < n; ++i) indeg[i] = static_cast<int>(parents[i].size());
  std::vector<Index> queue;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) queue.push_back(static_cast<Index>(i));
  std::size_t head = 0;
  while (head < queue.size()) {
    const auto u = static_cast<std::size_t>(queue[head++]);
    for (Index c : kids[u]) {
      auto ci = static_cast<std::size_t>(c);
      depth[ci] = std::max(depth[ci], depth[u] + 1);
      if (--indeg[ci] == 0) queue.push_back(c);
    }
  }
  if (queue.size() != n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (indeg[i] > 0) throw DataError("hierarchy: cycle detected through '" + names[i] + "'");
    }
  }

  std::vector<Index> aggs, base;
  for (std::size_t i = 0; i < n; ++i) {
    (kids[i].empty() ? base : aggs).push_back(static_cast<Index>(i));
  }
  if (!aggs.empty()) {
    for (Index b : base) {
      if (parents[static_cast<std::size_t>(b)].empty()) {
        throw DataError("hierarchy: orphan base series '" + names[static_cast<std::size_t>(b)] +
                        "' has no parent");
      }
    }
  }
  if (base_marker) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool structural = kids[i].empty();
      if (base_marker(names[i]) != structural) {
        throw DataError("hierarchy: base marker disagrees with structure for '" + names[i] + "'");
      }
    }
  }
  std::stable_sort(aggs.begin(), aggs.end(), [&](Index a, Index b) {
    return depth[static_cast<std::size_t>(a)] < depth[static_cast<std::size_t>(b)];
  });

  std::vector<Index> order = aggs;
  order.insert(order.end(), base.begin(), base.end());
  std::vector<Index> position(n);
  for (std::size_t k = 0; k < order.size(); ++k) position[static_cast<std::size_t>(order[k])] = static_cast<Index>(k);

  std::vector<std::string> ids, levels;
  std::vector<std::vector<Index>> children;
  for (Index o : order) {
    const auto oi = static_cast<std::size_t>(o);
    ids.push_back(names[oi]);
    std::string lab = labels[oi];
    if (lab.empty()) lab = kids[oi].empty() ? kBaseLevel : default_level(depth[oi]);
    levels.push_back(std::move(lab));
    std::vector<Index> ch;
    for (Index c : kids[oi]) ch.push_back(position[static_cast<std::size_t>(c)]);
    children.push_back(std::move(ch));
  }
  return from_parts(std::move(ids), std::move(levels), std::move(children),
                    static_cast<Index>(aggs.size()));
}

Hierarchy Hierarchy::from_parts(std::vector<std::string> ids, std::vector<std::string> levels,
                                std::vector<std::vector<Index>> children, Index n_aggregates) {
  if (ids.size() != levels.size() || ids.size() != children.size()) {
    throw DataError("hierarchy: inconsistent part sizes");
  }
  Hierarchy h;
  h.ids_ = std::move(ids);
  h.levels_ = std::move(levels);
  h.children_ = std::move(children);
  h.n_a_ = n_aggregates;
  h.finalize();
  return h;
}

void Hierarchy::finalize() {
  const Index n = size();
  const Index nb = n_base();
  if (nb <= 0) throw DataError("hierarchy: no base series");
  index_.clear();
  for (Index i = 0; i < n; ++i) {
    if (!index_.emplace(ids_[static_cast<std::size_t>(i)], i).second) {
      throw DataError("hierarchy: duplicate id '" + ids_[static_cast<std::size_t>(i)] + "'");
    }
  }
  for (Index i = 0; i < n; ++i) {
    const bool leaf = children_[static_cast<std::size_t>(i)].empty();
    if (leaf != is_base(i)) {
      throw DataError("hierarchy: series '" + id(i) + (leaf ? "' is an aggregate leaf" : "' is a base series with children"));
    }
  }

  // Depth (longest path from a root) over the given topological order.
  depth_.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n_a_; ++i) {
    for (Index c : children(i)) {
      if (c <= i && c < n_a_) throw DataError("hierarchy: aggregates are not in topological order");
      auto& d = depth_[static_cast<std::size_t>(c)];
      d = std::max(d, depth_[static_cast<std::size_t>(i)] + 1);
    }
  }

  // Supports bottom-up; children of an aggregate must not overlap.
  support_.assign(static_cast<std::size_t>(n), {});
  for (Index b = 0; b < nb; ++b) support_[static_cast<std::size_t>(n_a_ + b)] = {b};
  for (Index i = n_a_ - 1; i >= 0; --i) {
    std::vector<Index> acc;
    for (Index c : children(i)) {
      const auto& cs = support_[static_cast<std::size_t>(c)];
      acc.insert(acc.end(), cs.begin(), cs.end());
    }
    std::sort(acc.begin(), acc.end());
    auto dup = std::adjacent_find(acc.begin(), acc.end());
    if (dup != acc.end()) {
      throw DataError("hierarchy: aggregate '" + id(i) + "' counts base series '" +
                      id(n_a_ + *dup) + "' more than once");
    }
    support_[static_cast<std::size_t>(i)] = std::move(acc);
  }

  std::vector<Eigen::Triplet<double>> trips;
  for (Index i = 0; i < n; ++i) {
    for (Index b : support_[static_cast<std::size_t>(i)]) trips.emplace_back(i, b, 1.0);
  }
  SparseRowMatrix s(n, nb);
  s.setFromTriplets(trips.begin(), trips.end());
  s_ = SummingMatrix(std::move(s), n_a_);

  ancestors_.assign(static_cast<std::size_t>(nb), {});
  for (Index i = 0; i < n_a_; ++i) {
    for (Index b : support_[static_cast<std::size_t>(i)]) ancestors_[static_cast<std::size_t>(b)].push_back(i);
  }
  for (Index b = 0; b < nb; ++b) ancestors_[static_cast<std::size_t>(b)].push_back(n_a_ + b);

  level_names_.clear();
  for (const auto& l : levels_) {
    if (std::find(level_names_.begin(), level_names_.end(), l) == level_names_.end()) level_names_.push_back(l);
  }
}

std::optional<Index> Hierarchy::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Index Hierarchy::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown series id '" + id + "'");
  return it->second;
}

std::span<const Index> Hierarchy::support(Index series) const {
  return support_[static_cast<std::size_t>(series)];
}

std::span<const Index> Hierarchy::ancestors(Index base_index) const {
  if (base_index < 0 || base_index >= n_base()) {
    throw DataError("ancestors: base index " + std::to_string(base_index) + " out of range");
  }
  return ancestors_[static_cast<std::size_t>(base_index)];
}

std::vector<Index> Hierarchy::series_in_level(const std::string& label) const {
  std::vector<Index> out;
  for (Index i = 0; i < size(); ++i)
    if (levels_[static_cast<std::size_t>(i)] == label) out.push_back(i);
  return out;
}

std::vector<Edge> Hierarchy::edges() const {
  std::vector<Edge> out;
  std::vector<bool> has_parent(static_cast<std::size_t>(size()), false);
  for (Index i = 0; i < n_a_; ++i)
    for (Index c : children(i)) has_parent[static_cast<std::size_t>(c)] = true;
  for (Index i = 0; i < size(); ++i)
    if (!has_parent[static_cast<std::size_t>(i)]) out.push_back({"", id(i), level(i)});
  for (Index i = 0; i < n_a_; ++i)
    for (Index c : children(i)) out.push_back({id(i), id(c), level(c)});
  return out;
}

// ---------------------------------------------------------------------------
// Free functions

SummingMatrix summing_matrix(const Hierarchy& h) { return h.summing(); }

Matrix aggregate(const SummingMatrix& s, const Eigen::Ref<const Matrix>& b_panel) {
  return s.apply_panel(b_panel);
}

std::vector<Index> ancestors(const Hierarchy& h, Index base_index) {
  auto a = h.ancestors(base_index);
  return {a.begin(), a.end()};
}

CoherenceReport check_coherence(const Matrix& y_panel, const SummingMatrix& s,
                                double tol) {
  if (y_panel.cols() != s.rows()) {
    throw DataError("check_coherence: panel has " + std::to_string(y_panel.cols()) +
                    " columns, expected n=" + std::to_string(s.rows()));
  }
  CoherenceReport rep;
  const Index nb = s.cols();
  const Index na = s.n_aggregates();
  for (Index t = 0; t < y_panel.rows(); ++t) {
    Vector base = y_panel.row(t).tail(nb).transpose();
    Vector implied = s.sparse() * base;
    for (Index i = 0; i < na; ++i) {
      rep.max_violation = std::max(rep.max_violation, std::abs(y_panel(t, i) - implied[i]));
    }
  }
  rep.coherent = rep.max_violation <= tol;
  return rep;
}

CoherenceReport check_coherence(const Vector& y, const SummingMatrix& s,
                                double tol) {
  Matrix panel = y.transpose();
  return check_coherence(panel, s, tol);
}

// ---------------------------------------------------------------------------
// Partition

SubHierarchyPartition partition(const Hierarchy& h, const std::string& boundary_level,
                                const std::map<std::string, Side>& assignment_overrides) {
  const Index n = h.size();
  const Index na = h.n_aggregates();
  const Index nb = h.n_base();
  std::vector<Index> boundary = h.series_in_level(boundary_level);
  if (boundary.empty()) throw DataError("partition: no series at level '" + boundary_level + "'");

  std::vector<bool> is_boundary(static_cast<std::size_t>(n), false);
  for (Index k : boundary) is_boundary[static_cast<std::size_t>(k)] = true;

  SubHierarchyPartition part;
  part.boundary_level = boundary_level;
  part.lower_of_base.assign(static_cast<std::size_t>(nb), -1);

  for (std::size_t li = 0; li < boundary.size(); ++li) {
    for (Index b : h.support(boundary[li])) {
      auto& slot = part.lower_of_base[static_cast<std::size_t>(b)];
      if (slot >= 0) {
        throw DataError("partition: base series '" + h.id(h.base_series(b)) +
                        "' has more than one ancestor at level '" + boundary_level +
                        "'; reassign that level's forecasts instead");
      }
      slot = static_cast<Index>(li);
    }
  }
  for (Index b = 0; b < nb; ++b) {
    if (part.lower_of_base[static_cast<std::size_t>(b)] < 0) {
      throw DataError("partition: base series '" + h.id(h.base_series(b)) +
                      "' has no ancestor at level '" + boundary_level + "'");
    }
  }

  part.degenerate = std::all_of(boundary.begin(), boundary.end(), [&](Index k) { return h.is_base(k); });

  // Lower hierarchies: everything reachable from each boundary node.
  std::vector<Index> owner(static_cast<std::size_t>(n), -1);
  for (std::size_t li = 0; li < boundary.size(); ++li) {
    std::vector<Index> stack{boundary[li]};
    std::vector<Index> nodes;
    while (!stack.empty()) {
      Index u = stack.back();
      stack.pop_back();
      if (owner[static_cast<std::size_t>(u)] == static_cast<Index>(li)) continue;
      owner[static_cast<std::size_t>(u)] = static_cast<Index>(li);
      nodes.push_back(u);
      for (Index c : h.children(u)) stack.push_back(c);
    }
    std::sort(nodes.begin(), nodes.end());  // preserves hierarchy order
    std::unordered_map<Index, Index> local;
    for (std::size_t k = 0; k < nodes.size(); ++k) local[nodes[k]] = static_cast<Index>(k);
    std::vector<std::string> ids, levels;
    std::vector<std::vector<Index>> kids;
    Index lna = 0;
    std::vector<Index> lbase;
    for (Index u : nodes) {
      ids.push_back(h.id(u));
      levels.push_back(h.level(u));
      std::vector<Index> ch;
      for (Index c : h.children(u)) ch.push_back(local.at(c));
      kids.push_back(std::move(ch));
      if (h.is_base(u)) lbase.push_back(u - na);
      else ++lna;
    }
    part.lowers.push_back(Hierarchy::from_parts(std::move(ids), std::move(levels), std::move(kids), lna));
    part.lower_series.push_back(nodes);
    part.lower_base.push_back(std::move(lbase));
  }

  // Upper candidates: aggregates outside every lower whose support is an
  // exact union of boundary supports through upper children.
  std::vector<bool> upper(static_cast<std::size_t>(n), false);
  for (Index k : boundary) upper[static_cast<std::size_t>(k)] = true;
  for (Index i = 0; i < na; ++i)
    if (owner[static_cast<std::size_t>(i)] < 0) upper[static_cast<std::size_t>(i)] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (Index i = 0; i < na; ++i) {
      if (!upper[static_cast<std::size_t>(i)] || is_boundary[static_cast<std::size_t>(i)]) continue;
      std::size_t covered = 0;
      bool any = false;
      for (Index c : h.children(i)) {
        if (upper[static_cast<std::size_t>(c)]) {
          covered += h.support(c).size();
          any = true;
        }
      }
      if (!any || covered != h.support(i).size()) {
        upper[static_cast<std::size_t>(i)] = false;
        changed = true;
      }
    }
  }

  std::vector<Index> up_aggs, up_base;
  for (Index i = 0; i < n; ++i) {
    if (!upper[static_cast<std::size_t>(i)]) continue;
    (is_boundary[static_cast<std::size_t>(i)] ? up_base : up_aggs).push_back(i);
  }
  part.upper_series = up_aggs;
  part.upper_series.insert(part.upper_series.end(), up_base.begin(), up_base.end());
  {
    std::unordered_map<Index, Index> local;
    for (std::size_t k = 0; k < part.upper_series.size(); ++k) local[part.upper_series[k]] = static_cast<Index>(k);
    std::vector<std::string> ids, levels;
    std::vector<std::vector<Index>> kids;
    for (Index u : part.upper_series) {
      ids.push_back(h.id(u));
      levels.push_back(h.level(u));
      std::vector<Index> ch;
      if (!is_boundary[static_cast<std::size_t>(u)]) {
        for (Index c : h.children(u))
          if (upper[static_cast<std::size_t>(c)]) ch.push_back(local.at(c));
      }
      kids.push_back(std::move(ch));
    }
    part.upper = Hierarchy::from_parts(std::move(ids), std::move(levels), std::move(kids),
                                       static_cast<Index>(up_aggs.size()));
  }

  for (Index i = 0; i < na; ++i) {
    if (!upper[static_cast<std::size_t>(i)] && owner[static_cast<std::size_t>(i)] < 0) part.non_nesting.push_back(i);
  }

  // Default assignment: a level goes up only when all its series are upper.
  for (const auto& lab : h.level_names()) {
    bool all_upper = true;
    for (Index i : h.series_in_level(lab)) all_upper = all_upper && upper[static_cast<std::size_t>(i)];
    part.forecast_assignment[lab] = all_upper ? Side::upper : Side::lower;
  }
  if (part.degenerate) part.forecast_assignment[boundary_level] = Side::upper;
  for (const auto& [lab, side] : assignment_overrides) {
    auto it = part.forecast_assignment.find(lab);
    if (it == part.forecast_assignment.end()) {
      throw DataError("partition: assignment names unknown level '" + lab + "'");
    }
    if (side == Side::upper) {
      for (Index i : h.series_in_level(lab)) {
        if (!upper[static_cast<std::size_t>(i)]) {
          throw DataError("partition: level '" + lab + "' cannot be assigned to the upper sub-hierarchy; series '" +
                          h.id(i) + "' lies below the boundary");
        }
      }
    }
    it->second = side;
  }
  return part;
}

}  // namespace dhf
