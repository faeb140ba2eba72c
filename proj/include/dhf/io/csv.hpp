#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dhf/combination.hpp"
#include "dhf/disaggregation.hpp"
#include "dhf/hierarchy.hpp"
#include "dhf/types.hpp"

namespace dhf::io {

/// Splits one CSV line; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line);

/// Parses a real number; "NA", "NaN" and empty cells give NaN. Throws
/// DataError mentioning `where` on anything else.
double parse_real(const std::string& cell, const std::string& where);

/// %.17g formatting.
std::string format_real(double v);

/// Wide data: a time column followed by one column per series.
struct SeriesPanel {
  std::vector<std::string> times;
  std::vector<std::string> ids;
  Matrix values;  // times x ids, NaN for missing
};

SeriesPanel read_panel(std::istream& in, const std::string& source = "data");
SeriesPanel read_panel_file(const std::string& path);
void write_panel(std::ostream& out, const SeriesPanel& panel, const std::string& time_header = "time");

/// Reorders columns into hierarchy order. Every panel column must be a
/// hierarchy series and every base series must be present (all unknown and
/// missing ids are listed). Absent aggregate columns are summed from the
/// base series; present aggregates must not have missing values.
Matrix align_panel(const SeriesPanel& panel, const Hierarchy& h);

/// Edge list `parent,child[,level]` with a header row.
std::vector<Edge> read_edges(std::istream& in, const std::string& source = "hierarchy");
Hierarchy read_hierarchy_file(const std::string& path);
void write_edges(std::ostream& out, const std::vector<Edge>& edges);

/// `series_id,origin_time,horizon,mean,variance` rows; variance may be
/// empty or NA.
struct ExoRow {
  std::string series_id;
  std::string origin_time;
  int horizon = 1;
  double mean = 0.0;
  std::optional<double> variance;
};
std::vector<ExoRow> read_exo(std::istream& in, const std::string& source = "exo");
std::vector<ExoRow> read_exo_file(const std::string& path);
void write_exo(std::ostream& out, const std::vector<ExoRow>& rows);

/// Resolves origin times against the panel's time labels.
std::vector<ExoForecast> resolve_exo(const std::vector<ExoRow>& rows, const std::vector<std::string>& times);

/// `series_id,horizon,mean,variance`.
struct ForecastRow {
  std::string series_id;
  int horizon = 1;
  double mean = 0.0;
  double variance = 0.0;
};
std::vector<ForecastRow> read_forecasts(std::istream& in, const std::string& source = "forecast");
void write_forecasts(std::ostream& out, const std::vector<ForecastRow>& rows);

/// `time,series_id,source_level,weight_mean,weight_sd`.
struct WeightRow {
  std::string time;
  std::string series_id;
  std::string source_level;
  double mean = 0.0;
  double sd = 0.0;
};
std::vector<WeightRow> read_weights(std::istream& in, const std::string& source = "weights");
void write_weights(std::ostream& out, const std::vector<WeightRow>& rows, bool header = true);

}  // namespace dhf::io
