// Command-line front end: fit, forecast, reconcile, backtest, score.

#include <iostream>

#include <CLI11.hpp>

#include "dhf/errors.hpp"
#include "dhf/io/commands.hpp"
#include "dhf/kernels.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic probabilistic hierarchical forecast reconciliation"};
  app.require_subcommand(1);
  dhf::io::CommandOptions opt;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", opt.config, "JSON run configuration");
    c->add_option("--out", opt.out, "Output file (stdout when omitted)");
    c->add_option("--threads", opt.threads, "Worker threads (1 runs the serial kernels)");
    c->add_option("--seed", opt.seed, "Seed recorded with the run");
  };
  auto* fit = app.add_subcommand("fit", "Fit the base model and write a checkpoint");
  fit->add_option("--data", opt.data, "Wide data CSV");
  fit->add_option("--hierarchy", opt.hierarchy, "Edge list CSV (parent,child[,level])");
  fit->add_option("--checkpoint", opt.checkpoint, "Checkpoint to write")->required();
  add_common(fit);

  auto* forecast = app.add_subcommand("forecast", "Prior forecasts from a checkpoint");
  forecast->add_option("--checkpoint", opt.checkpoint, "Checkpoint to read")->required();
  forecast->add_option("--horizon", opt.horizon, "Forecast horizon");
  add_common(forecast);

  auto* reconcile = app.add_subcommand("reconcile", "Reconcile checkpoint priors with exogenous forecasts");
  reconcile->add_option("--checkpoint", opt.checkpoint, "Checkpoint to read")->required();
  reconcile->add_option("--exo", opt.exo, "Exogenous forecasts CSV");
  reconcile->add_option("--horizon", opt.horizon, "Forecast horizon");
  add_common(reconcile);

  auto* backtest = app.add_subcommand("backtest", "Rolling-origin evaluation of all methods");
  backtest->add_option("--data", opt.data, "Wide data CSV");
  backtest->add_option("--hierarchy", opt.hierarchy, "Edge list CSV");
  backtest->add_option("--exo", opt.exo, "Exogenous forecasts CSV (seasonal means when omitted)");
  backtest->add_option("--horizon", opt.horizon, "Forecast horizon");
  backtest->add_option("--benchmark", opt.benchmark, "Method the relative tables divide by");
  add_common(backtest);

  auto* score = app.add_subcommand("score", "Score a forecast CSV against actuals");
  score->add_option("forecast", opt.input, "Forecast CSV (series_id,horizon,mean,variance)")->required();
  score->add_option("--data", opt.data, "Actuals; row j is scored against horizon j");
  score->add_option("--hierarchy", opt.hierarchy, "Edge list CSV");
  add_common(score);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (opt.threads > 0) {
    dhf::set_threads(opt.threads);
    dhf::set_default_exec(opt.threads == 1 ? dhf::Exec::serial : dhf::Exec::parallel);
  }

  try {
    if (*fit) {
      dhf::io::cmd_fit(opt, std::cout);
    } else if (*forecast) {
      dhf::io::cmd_forecast(opt, std::cout, std::cerr);
    } else if (*reconcile) {
      dhf::io::cmd_reconcile(opt, std::cout, std::cerr);
    } else if (*backtest) {
      // Tables go to stdout unless the CSV itself does.
      std::ostream& report = opt.out ? std::cout : std::cerr;
      dhf::io::cmd_backtest(opt, std::cout, report, std::cerr);
    } else if (*score) {
      std::ostream& report = opt.out ? std::cout : std::cerr;
      dhf::io::cmd_score(opt, std::cout, report);
    }
  } catch (const dhf::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const dhf::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
