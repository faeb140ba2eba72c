#include "dhf/io/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dhf/errors.hpp"

namespace dhf::io {

namespace {

using json = nlohmann::json;

// Rejects keys outside `allowed`, naming the section.
void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw DataError("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw DataError("config: unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError("config: bad value for '" + std::string(key) + "' in " + where);
  }
}

void read_discounts(const json& j, DiscountProfile& d) {
  if (j.is_string()) {
    d = DiscountProfile::named(j.get<std::string>());
    return;
  }
  const std::string w = "mrdlm.discounts";
  check_keys(j, {"factor_trend", "factor_seasonal", "base_level", "base_seasonal", "base_regression", "variance"}, w);
  read(j, "factor_trend", d.factor_trend, w);
  read(j, "factor_seasonal", d.factor_seasonal, w);
  read(j, "base_level", d.base_level, w);
  read(j, "base_seasonal", d.base_seasonal, w);
  read(j, "base_regression", d.base_regression, w);
  read(j, "variance", d.variance, w);
  for (double v : {d.factor_trend, d.factor_seasonal, d.base_level, d.base_seasonal, d.base_regression, d.variance}) {
    if (!(v > 0.0 && v <= 1.0)) throw DataError("config: discounts must lie in (0, 1]");
  }
}

void read_combination(const json& j, CombinationConfig& c, const std::string& w) {
  check_keys(j, {"discount", "divisor", "level_divisors", "deviation_divisor", "offset", "dense_cap"}, w);
  read(j, "discount", c.discount, w);
  read(j, "divisor", c.divisor, w);
  read(j, "level_divisors", c.level_divisors, w);
  read(j, "deviation_divisor", c.deviation_divisor, w);
  read(j, "offset", c.offset, w);
  read(j, "dense_cap", c.dense_cap, w);
  if (!(c.discount > 0.0 && c.discount <= 1.0)) throw DataError("config: " + w + ".discount must lie in (0, 1]");
  if (!(c.divisor > 0.0) || !(c.deviation_divisor > 0.0)) throw DataError("config: " + w + " divisors must be positive");
  for (const auto& [k, v] : c.level_divisors)
    if (!(v > 0.0)) throw DataError("config: " + w + ".level_divisors['" + k + "'] must be positive");
}

json combination_json(const CombinationConfig& c) {
  return {{"discount", c.discount},   {"divisor", c.divisor},
          {"level_divisors", c.level_divisors}, {"deviation_divisor", c.deviation_divisor},
          {"offset", c.offset},       {"dense_cap", c.dense_cap}};
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  check_keys(root, {"schema_version", "mrdlm", "reconcile", "horizon", "backtest", "files", "seed"}, "the top level");
  if (!root.contains("schema_version")) throw DataError("config: schema_version is required");
  int version = 0;
  read(root, "schema_version", version, "the top level");
  if (version != kSchemaVersion) {
    throw DataError("config: unsupported schema_version " + std::to_string(version) + " (expected " +
                    std::to_string(kSchemaVersion) + ")");
  }
  RunConfig cfg;
  read(root, "horizon", cfg.pipeline.horizon, "the top level");
  if (cfg.pipeline.horizon < 1) throw DataError("config: horizon must be at least 1");
  cfg.plan.horizon = cfg.pipeline.horizon;
  read(root, "seed", cfg.seed, "the top level");

  if (root.contains("mrdlm")) {
    const json& m = root["mrdlm"];
    const std::string w = "mrdlm";
    check_keys(m, {"discounts", "period", "factor_harmonics", "base_harmonics", "init_window", "ridge", "max_factors",
                   "factors"},
               w);
    auto& mc = cfg.pipeline.mrdlm;
    if (m.contains("discounts")) read_discounts(m["discounts"], mc.discounts);
    read(m, "period", mc.period, w);
    read(m, "factor_harmonics", mc.factor_harmonics, w);
    read(m, "base_harmonics", mc.base_harmonics, w);
    read(m, "init_window", mc.init_window, w);
    read(m, "ridge", mc.ridge, w);
    read(m, "max_factors", mc.max_factors, w);
    read(m, "factors", cfg.pipeline.factor_ids, w);
    if (mc.init_window < 1) throw DataError("config: mrdlm.init_window must be at least 1");
    if (mc.ridge < 0.0) throw DataError("config: mrdlm.ridge must be non-negative");
  }

  if (root.contains("reconcile")) {
    const json& r = root["reconcile"];
    const std::string w = "reconcile";
    check_keys(r, {"boundary_level", "assignment", "pooled", "upper", "lower"}, w);
    auto& rc = cfg.pipeline.reconcile;
    read(r, "boundary_level", rc.boundary_level, w);
    read(r, "pooled", rc.pooled, w);
    if (r.contains("assignment")) {
      std::map<std::string, std::string> a;
      read(r, "assignment", a, w);
      for (const auto& [lvl, side] : a) {
        if (side == "upper") rc.assignment_overrides[lvl] = Side::upper;
        else if (side == "lower") rc.assignment_overrides[lvl] = Side::lower;
        else throw DataError("config: reconcile.assignment['" + lvl + "'] must be 'upper' or 'lower'");
      }
    }
    if (r.contains("upper")) read_combination(r["upper"], rc.upper, "reconcile.upper");
    if (r.contains("lower")) read_combination(r["lower"], rc.lower, "reconcile.lower");
  }

  if (root.contains("backtest")) {
    const json& b = root["backtest"];
    const std::string w = "backtest";
    check_keys(b, {"train_length", "warmup", "eval_every", "bucket_width", "residual_window", "methods", "benchmark",
                   "boundary_level"},
               w);
    read(b, "train_length", cfg.plan.train_length, w);
    read(b, "warmup", cfg.plan.warmup, w);
    read(b, "eval_every", cfg.plan.eval_every, w);
    read(b, "bucket_width", cfg.bucket_width, w);
    read(b, "residual_window", cfg.plan.residual_window, w);
    read(b, "benchmark", cfg.benchmark, w);
    read(b, "boundary_level", cfg.two_step_boundary, w);
    std::vector<std::string> names;
    read(b, "methods", names, w);
    for (const auto& n : names) cfg.methods.push_back(parse_method(n));
    if (cfg.plan.train_length < 1 || cfg.plan.warmup < 0 || cfg.plan.eval_every < 1 || cfg.bucket_width < 1 ||
        cfg.plan.residual_window < 2) {
      throw DataError("config: invalid backtest plan");
    }
  }

  if (root.contains("files")) {
    const json& f = root["files"];
    check_keys(f, {"data", "hierarchy", "exo"}, "files");
    std::string s;
    if (f.contains("data")) { read(f, "data", s, "files"); cfg.data_path = s; }
    if (f.contains("hierarchy")) { read(f, "hierarchy", s, "files"); cfg.hierarchy_path = s; }
    if (f.contains("exo")) { read(f, "exo", s, "files"); cfg.exo_path = s; }
  }
  return cfg;
}

RunConfig read_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
  const auto& mc = cfg.pipeline.mrdlm;
  const auto& d = mc.discounts;
  const auto& rc = cfg.pipeline.reconcile;
  std::map<std::string, std::string> assignment;
  for (const auto& [lvl, side] : rc.assignment_overrides) assignment[lvl] = side == Side::upper ? "upper" : "lower";
  std::vector<std::string> methods;
  for (Method m : cfg.methods) methods.push_back(method_name(m));
  json root = {
      {"schema_version", kSchemaVersion},
      {"horizon", cfg.pipeline.horizon},
      {"seed", cfg.seed},
      {"mrdlm",
       {{"discounts",
         {{"factor_trend", d.factor_trend}, {"factor_seasonal", d.factor_seasonal}, {"base_level", d.base_level},
          {"base_seasonal", d.base_seasonal}, {"base_regression", d.base_regression}, {"variance", d.variance}}},
        {"period", mc.period},
        {"factor_harmonics", mc.factor_harmonics},
        {"base_harmonics", mc.base_harmonics},
        {"init_window", mc.init_window},
        {"ridge", mc.ridge},
        {"max_factors", mc.max_factors},
        {"factors", cfg.pipeline.factor_ids}}},
      {"reconcile",
       {{"boundary_level", rc.boundary_level},
        {"assignment", assignment},
        {"pooled", rc.pooled},
        {"upper", combination_json(rc.upper)},
        {"lower", combination_json(rc.lower)}}},
      {"backtest",
       {{"train_length", cfg.plan.train_length},
        {"warmup", cfg.plan.warmup},
        {"eval_every", cfg.plan.eval_every},
        {"bucket_width", cfg.bucket_width},
        {"residual_window", cfg.plan.residual_window},
        {"methods", methods},
        {"benchmark", cfg.benchmark},
        {"boundary_level", cfg.two_step_boundary}}}};
  json files = json::object();
  if (cfg.data_path) files["data"] = *cfg.data_path;
  if (cfg.hierarchy_path) files["hierarchy"] = *cfg.hierarchy_path;
  if (cfg.exo_path) files["exo"] = *cfg.exo_path;
  if (!files.empty()) root["files"] = files;
  return root.dump(2);
}

BacktestConfig backtest_config(const RunConfig& cfg) {
  BacktestConfig b;
  b.pipeline = cfg.pipeline;
  b.boundary_level = cfg.two_step_boundary;
  b.methods = cfg.methods;
  b.benchmark = cfg.benchmark;
  return b;
}

}  // namespace dhf::io
