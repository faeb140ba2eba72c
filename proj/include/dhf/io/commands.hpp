#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "dhf/backtest.hpp"
#include "dhf/io/config.hpp"

namespace dhf::io {

/// Command-line inputs shared by all commands. Paths given here override
/// those in the config file.
struct CommandOptions {
  std::optional<std::string> data;
  std::optional<std::string> hierarchy;
  std::optional<std::string> exo;
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::string> checkpoint;
  std::optional<int> horizon;
  std::optional<std::string> benchmark;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  /// Forecast file for `score`.
  std::optional<std::string> input;
};

/// Config file (or defaults) with command-line overrides applied.
RunConfig load_run_config(const CommandOptions& opt);

struct FitSummary {
  Index n = 0;
  Index n_aggregates = 0;
  Index n_base = 0;
  Index n_factors = 0;
  long steps = 0;
};

/// Fits the MRDLM through all rows of the data and writes a checkpoint.
FitSummary cmd_fit(const CommandOptions& opt, std::ostream& log);

/// Prior forecasts for every series and horizon 1..h. Writes to --out or
/// to `out` when no path is given.
void cmd_forecast(const CommandOptions& opt, std::ostream& out, std::ostream& log);

/// Reconciles the checkpoint's priors with exogenous forecasts issued at
/// the checkpoint's last time. Weight rows are appended to the file named
/// like --out with a `.weights.csv` suffix.
void cmd_reconcile(const CommandOptions& opt, std::ostream& out, std::ostream& log);

/// Rolling-origin backtest. The tidy score CSV goes to --out (or `out`);
/// aligned tables go to `report`.
BacktestResult cmd_backtest(const CommandOptions& opt, std::ostream& out, std::ostream& report, std::ostream& log);

/// Scores a forecast file against actuals: horizon j is compared with row j
/// of the data file.
void cmd_score(const CommandOptions& opt, std::ostream& out, std::ostream& report);

/// Path of the weight file that goes with a reconciled output path.
std::string weights_path(const std::string& out_path);

}  // namespace dhf::io
