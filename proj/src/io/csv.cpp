#include "dhf/io/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "dhf/errors.hpp"

namespace dhf::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string at_line(const std::string& source, long line) { return source + " line " + std::to_string(line); }

// Non-empty lines with their 1-based line numbers.
std::vector<std::pair<long, std::string>> read_lines(std::istream& in) {
  std::vector<std::pair<long, std::string>> out;
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    out.emplace_back(n, line);
  }
  return out;
}

std::ifstream open_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  return f;
}

void expect_header(const std::vector<std::string>& got, const std::vector<std::string>& want,
                   std::size_t required, const std::string& source) {
  if (got.size() < required || got.size() > want.size()) {
    throw DataError(source + ": header must be " + [&] {
      std::string s;
      for (std::size_t i = 0; i < want.size(); ++i) s += (i ? "," : "") + want[i];
      return s;
    }());
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (trim(got[i]) != want[i]) throw DataError(source + ": unexpected header column '" + got[i] + "'");
  }
}

int parse_int(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  int v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) throw DataError(where + ": expected an integer, got '" + cell + "'");
  return v;
}

bool is_integer(const std::string& s) {
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_real(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  if (t.empty() || t == "NA" || t == "NaN" || t == "nan" || t == "NAN") return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) throw DataError(where + ": expected a number, got '" + cell + "'");
  return v;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SeriesPanel read_panel(std::istream& in, const std::string& source) {
  const auto lines = read_lines(in);
  if (lines.empty()) throw DataError(source + ": no rows");
  SeriesPanel p;
  const auto header = split_csv_line(lines[0].second);
  if (header.size() < 2) throw DataError(at_line(source, lines[0].first) + ": need a time column and at least one series");
  std::set<std::string> seen;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string id = trim(header[c]);
    if (id.empty()) throw DataError(at_line(source, lines[0].first) + ": empty series id in column " + std::to_string(c + 1));
    if (!seen.insert(id).second) throw DataError(at_line(source, lines[0].first) + ": duplicate series '" + id + "'");
    p.ids.push_back(id);
  }
  if (lines.size() < 2) throw DataError(source + ": no rows");
  p.values.resize(static_cast<Index>(lines.size() - 1), static_cast<Index>(p.ids.size()));
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto where = at_line(source, lines[r].first);
    const auto cells = split_csv_line(lines[r].second);
    if (cells.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    }
    p.times.push_back(trim(cells[0]));
    for (std::size_t c = 1; c < cells.size(); ++c)
      p.values(static_cast<Index>(r - 1), static_cast<Index>(c - 1)) = parse_real(cells[c], where);
  }
  const bool numeric = std::all_of(p.times.begin(), p.times.end(), is_integer);
  for (std::size_t r = 1; r < p.times.size(); ++r) {
    const bool increasing = numeric ? std::stol(p.times[r - 1]) < std::stol(p.times[r]) : p.times[r - 1] < p.times[r];
    if (!increasing) {
      throw DataError(at_line(source, lines[r + 1].first) + ": time index must be strictly increasing ('" +
                      p.times[r - 1] + "' then '" + p.times[r] + "')");
    }
  }
  return p;
}

SeriesPanel read_panel_file(const std::string& path) {
  auto f = open_file(path);
  return read_panel(f, path);
}

void write_panel(std::ostream& out, const SeriesPanel& p, const std::string& time_header) {
  out << time_header;
  for (const auto& id : p.ids) out << ',' << id;
  out << '\n';
  for (Index t = 0; t < p.values.rows(); ++t) {
    out << p.times[static_cast<std::size_t>(t)];
    for (Index c = 0; c < p.values.cols(); ++c) out << ',' << format_real(p.values(t, c));
    out << '\n';
  }
}

Matrix align_panel(const SeriesPanel& p, const Hierarchy& h) {
  std::vector<Index> column_of(static_cast<std::size_t>(h.size()), -1);
  std::vector<std::string> unknown;
  for (std::size_t c = 0; c < p.ids.size(); ++c) {
    const auto i = h.find(p.ids[c]);
    if (!i) unknown.push_back(p.ids[c]);
    else column_of[static_cast<std::size_t>(*i)] = static_cast<Index>(c);
  }
  std::vector<std::string> missing;
  for (Index j = h.n_aggregates(); j < h.size(); ++j)
    if (column_of[static_cast<std::size_t>(j)] < 0) missing.push_back(h.id(j));
  if (!unknown.empty() || !missing.empty()) {
    std::string msg = "data columns do not match the hierarchy";
    auto list = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
      return s;
    };
    if (!unknown.empty()) msg += "; not in hierarchy: " + list(unknown);
    if (!missing.empty()) msg += "; missing base series: " + list(missing);
    throw DataError(msg);
  }
  const Index t_n = p.values.rows();
  Matrix y(t_n, h.size());
  for (Index j = h.n_aggregates(); j < h.size(); ++j) y.col(j) = p.values.col(column_of[static_cast<std::size_t>(j)]);
  const Matrix summed = y.rightCols(h.n_base()) * h.summing().dense().topRows(h.n_aggregates()).transpose();
  for (Index i = 0; i < h.n_aggregates(); ++i) {
    const Index c = column_of[static_cast<std::size_t>(i)];
    if (c < 0) {
      y.col(i) = summed.col(i);
      continue;
    }
    y.col(i) = p.values.col(c);
    for (Index t = 0; t < t_n; ++t) {
      if (std::isnan(y(t, i))) {
        throw DataError("aggregate '" + h.id(i) + "' is missing at time '" + p.times[static_cast<std::size_t>(t)] + "'");
      }
    }
  }
  return y;
}

std::vector<Edge> read_edges(std::istream& in, const std::string& source) {
  const auto lines = read_lines(in);
  if (lines.empty()) throw DataError(source + ": no rows");
  expect_header(split_csv_line(lines[0].second), {"parent", "child", "level"}, 2, source);
  std::vector<Edge> edges;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split_csv_line(lines[r].second);
    if (cells.size() < 2 || cells.size() > 3) throw DataError(at_line(source, lines[r].first) + ": expected 2 or 3 fields");
    Edge e{trim(cells[0]), trim(cells[1]), cells.size() > 2 ? trim(cells[2]) : std::string()};
    if (e.child.empty()) throw DataError(at_line(source, lines[r].first) + ": empty child id");
    edges.push_back(std::move(e));
  }
  if (edges.empty()) throw DataError(source + ": no rows");
  return edges;
}

Hierarchy read_hierarchy_file(const std::string& path) {
  auto f = open_file(path);
  const auto edges = read_edges(f, path);
  return Hierarchy::build(edges);
}

void write_edges(std::ostream& out, const std::vector<Edge>& edges) {
  out << "parent,child,level\n";
  for (const auto& e : edges) out << e.parent << ',' << e.child << ',' << e.level << '\n';
}

std::vector<ExoRow> read_exo(std::istream& in, const std::string& source) {
  const auto lines = read_lines(in);
  if (lines.empty()) throw DataError(source + ": no rows");
  expect_header(split_csv_line(lines[0].second), {"series_id", "origin_time", "horizon", "mean", "variance"}, 4,
                source);
  std::vector<ExoRow> rows;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto where = at_line(source, lines[r].first);
    const auto cells = split_csv_line(lines[r].second);
    if (cells.size() < 4 || cells.size() > 5) throw DataError(where + ": expected 4 or 5 fields");
    ExoRow row;
    row.series_id = trim(cells[0]);
    row.origin_time = trim(cells[1]);
    row.horizon = parse_int(cells[2], where);
    if (row.horizon < 1) throw DataError(where + ": horizon must be at least 1");
    row.mean = parse_real(cells[3], where);
    if (!std::isfinite(row.mean)) throw DataError(where + ": mean must be a finite number");
    if (cells.size() == 5) {
      const double v = parse_real(cells[4], where);
      if (!std::isnan(v)) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw DataError(where + ": variance must be finite and non-negative");
        row.variance = v;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ExoRow> read_exo_file(const std::string& path) {
  auto f = open_file(path);
  return read_exo(f, path);
}

void write_exo(std::ostream& out, const std::vector<ExoRow>& rows) {
  out << "series_id,origin_time,horizon,mean,variance\n";
  for (const auto& r : rows) {
    out << r.series_id << ',' << r.origin_time << ',' << r.horizon << ',' << format_real(r.mean) << ','
        << (r.variance ? format_real(*r.variance) : std::string("NA")) << '\n';
  }
}

std::vector<ExoForecast> resolve_exo(const std::vector<ExoRow>& rows, const std::vector<std::string>& times) {
  std::map<std::string, long> index;
  for (std::size_t t = 0; t < times.size(); ++t) index.emplace(times[t], static_cast<long>(t));
  std::vector<ExoForecast> out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto it = index.find(rows[r].origin_time);
    if (it == index.end()) {
      throw DataError("exo row " + std::to_string(r + 1) + ": origin time '" + rows[r].origin_time +
                      "' is not in the data");
    }
    out.push_back({rows[r].series_id, it->second, rows[r].horizon, rows[r].mean, rows[r].variance});
  }
  return out;
}

std::vector<ForecastRow> read_forecasts(std::istream& in, const std::string& source) {
  const auto lines = read_lines(in);
  if (lines.empty()) throw DataError(source + ": no rows");
  expect_header(split_csv_line(lines[0].second), {"series_id", "horizon", "mean", "variance"}, 4, source);
  std::vector<ForecastRow> rows;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto where = at_line(source, lines[r].first);
    const auto cells = split_csv_line(lines[r].second);
    if (cells.size() != 4) throw DataError(where + ": expected 4 fields");
    rows.push_back({trim(cells[0]), parse_int(cells[1], where), parse_real(cells[2], where), parse_real(cells[3], where)});
  }
  return rows;
}

void write_forecasts(std::ostream& out, const std::vector<ForecastRow>& rows) {
  out << "series_id,horizon,mean,variance\n";
  for (const auto& r : rows)
    out << r.series_id << ',' << r.horizon << ',' << format_real(r.mean) << ',' << format_real(r.variance) << '\n';
}

std::vector<WeightRow> read_weights(std::istream& in, const std::string& source) {
  const auto lines = read_lines(in);
  if (lines.empty()) throw DataError(source + ": no rows");
  expect_header(split_csv_line(lines[0].second), {"time", "series_id", "source_level", "weight_mean", "weight_sd"}, 5,
                source);
  std::vector<WeightRow> rows;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto where = at_line(source, lines[r].first);
    const auto cells = split_csv_line(lines[r].second);
    if (cells.size() != 5) throw DataError(where + ": expected 5 fields");
    rows.push_back({trim(cells[0]), trim(cells[1]), trim(cells[2]), parse_real(cells[3], where),
                    parse_real(cells[4], where)});
  }
  return rows;
}

void write_weights(std::ostream& out, const std::vector<WeightRow>& rows, bool header) {
  if (header) out << "time,series_id,source_level,weight_mean,weight_sd\n";
  for (const auto& r : rows)
    out << r.time << ',' << r.series_id << ',' << r.source_level << ',' << format_real(r.mean) << ','
        << format_real(r.sd) << '\n';
}

}  // namespace dhf::io
