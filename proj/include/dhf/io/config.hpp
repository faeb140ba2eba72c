#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dhf/backtest.hpp"
#include "dhf/pipeline.hpp"

namespace dhf::io {

inline constexpr int kSchemaVersion = 1;

/// Everything a command needs besides the data itself.
struct RunConfig {
  PipelineConfig pipeline;
  BacktestPlan plan;
  /// Width of horizon buckets in backtest tables; 1 reports every horizon.
  int bucket_width = 1;
  /// Boundary level for dhf-2step in backtests.
  std::string two_step_boundary;
  std::vector<Method> methods;
  std::string benchmark = "bu-diag";
  std::optional<std::string> data_path;
  std::optional<std::string> hierarchy_path;
  std::optional<std::string> exo_path;
  std::uint64_t seed = 0;
};

/// Parses JSON text. `schema_version` is required; unknown keys anywhere
/// are errors.
RunConfig parse_config(const std::string& text);
RunConfig read_config_file(const std::string& path);

/// JSON that parses back to the same configuration.
std::string config_to_json(const RunConfig& cfg);

BacktestConfig backtest_config(const RunConfig& cfg);

}  // namespace dhf::io
