// ccpt - command line front end: schedule emission, training runs, schedule
// sweeps, the precision range test, and the critical-period protocols.
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccpt/harness.hpp"
#include "ccpt/io.hpp"
#include "ccpt/schedule.hpp"

namespace {

using ccpt::ConfigError;
using ccpt::json;

json load_config_doc(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must be key=value: " + kv);
    const std::string value = kv.substr(eq + 1);
    std::vector<std::string> parts;
    std::istringstream keys(kv.substr(0, eq));
    std::string part;
    while (std::getline(keys, part, '.')) parts.push_back(part);
    json* node = &doc;
    try {
      for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &((*node)[parts[i]]);
      json parsed;
      try {
        parsed = json::parse(value);
      } catch (const json::exception&) {
        parsed = value;  // bare strings stay strings
      }
      (*node)[parts.back()] = parsed;
    } catch (const json::exception&) {
      throw ConfigError("cannot apply override: " + kv);
    }
  }
  return doc;
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  const auto ext = p.extension();
  p.replace_extension();
  return p.string() + suffix + ext.string();
}

std::string config_comment(const json& echo) { return "# config: " + echo.dump() + "\n"; }

long fraction_steps(double frac, long steps) { return std::lround(frac * double(steps)); }

// excludes diverged trials; pairs with the divergence marking in the CSVs
std::vector<double> finite_metrics(const std::vector<ccpt::RunReport>& reports) {
  std::vector<double> xs;
  for (const auto& r : reports)
    if (!r.diverged) xs.push_back(r.final_test_metric);
  return xs;
}

int cmd_sched_emit(const std::string& profile, const std::string& variant, double steepness,
                   int n, int qmin, int qmax, long steps, const std::string& out) {
  ccpt::ScheduleSpec spec;
  spec.profile.kind = ccpt::parse_profile_kind(profile);
  spec.profile.steepness = steepness;
  spec.variant = ccpt::parse_variant(variant);
  spec.n_cycles = n;
  spec.q_min = qmin;
  spec.q_max = qmax;
  spec.total_steps = steps;
  ccpt::validate_spec(spec);
  std::ostringstream os;
  ccpt::write_trace_csv(spec, os);
  ccpt::atomic_write_file(out, os.str());
  return 0;
}

int cmd_train(const json& doc, const std::string& out, const std::string& save_model) {
  const ccpt::RunConfig cfg = ccpt::config_from_json(doc);
  const ccpt::RunReport report = ccpt::run(cfg);
  ccpt::atomic_write_file(out, ccpt::report_to_json(report).dump(2) + "\n");
  if (!save_model.empty()) ccpt::save_checkpoint(save_model, report.final_params);
  if (report.diverged) {
    std::cerr << "run diverged after " << report.train_loss.size() << " steps\n";
    return 3;
  }
  return 0;
}

int cmd_sweep(const json& doc, const std::string& out) {
  const ccpt::RunConfig cfg = ccpt::config_from_json(doc);
  const auto rows = ccpt::schedule_sweep(cfg);
  const std::string comment = config_comment(ccpt::to_json(cfg));
  ccpt::atomic_write_file(out, comment + ccpt::scatter_csv(rows));
  ccpt::atomic_write_file(with_suffix(out, ".trials"), comment + ccpt::trials_csv(rows));
  bool any_finite = false;
  for (const auto& r : rows) any_finite |= r.finite_trials > 0;
  if (!any_finite) {
    std::cerr << "all trials diverged\n";
    return 3;
  }
  return 0;
}

int cmd_range_test(const json& doc, const std::string& out) {
  const ccpt::RunConfig cfg = ccpt::config_from_json(doc);
  std::vector<int> candidates;
  if (doc.contains("range_candidates")) {
    candidates = doc.at("range_candidates").get<std::vector<int>>();
  } else {
    for (int q = 2; q <= ccpt::backward_bits(cfg); ++q) candidates.push_back(q);
  }
  const double tau = doc.value("range_tau", 0.5);
  const double frac = doc.value("range_probe_fraction", 0.1);
  int q_min = 0;
  try {
    q_min = ccpt::precision_range_test(cfg, candidates, tau, frac);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  json result = {{"config", ccpt::to_json(cfg)},
                 {"candidates", candidates},
                 {"tau", tau},
                 {"probe_fraction", frac},
                 {"q_min", q_min}};
  ccpt::atomic_write_file(out, result.dump(2) + "\n");
  return 0;
}

int cmd_deficit(const json& doc, const std::string& out) {
  const ccpt::RunConfig base = ccpt::config_from_json(doc);
  std::vector<double> fractions{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  if (doc.contains("deficit_r_fractions"))
    fractions = doc.at("deficit_r_fractions").get<std::vector<double>>();
  const int bits = doc.value("deficit_bits", 2);

  std::vector<long> r_values;
  for (double f : fractions) r_values.push_back(fraction_steps(f, base.steps));

  std::vector<std::pair<long, std::vector<double>>> curve;
  for (long r : r_values) curve.push_back({r, {}});
  bool any_finite = false;
  for (int trial = 0; trial < base.trials; ++trial) {
    ccpt::RunConfig cfg = base;
    cfg.seed = base.seed + std::uint64_t(trial);
    const auto reports = ccpt::deficit_sweep(cfg, r_values, bits);
    for (std::size_t i = 0; i < reports.size(); ++i)
      if (!reports[i].diverged) {
        curve[i].second.push_back(reports[i].final_test_metric);
        any_finite = true;
      }
  }
  ccpt::atomic_write_file(out, config_comment(ccpt::to_json(base)) +
                                   ccpt::sweep_curve_csv("R", curve));
  if (!any_finite) {
    std::cerr << "all trials diverged\n";
    return 3;
  }
  return 0;
}

int cmd_probe(const json& doc, const std::string& out) {
  const ccpt::RunConfig base = ccpt::config_from_json(doc);
  const double window_frac = doc.value("probe_window_fraction", 0.3);
  std::vector<double> offset_fracs{0.0, 0.1, 0.2, 0.3, 0.4};
  if (doc.contains("probe_offset_fractions"))
    offset_fracs = doc.at("probe_offset_fractions").get<std::vector<double>>();
  const int bits = doc.value("probe_bits", 2);

  const long window = fraction_steps(window_frac, base.steps);
  std::vector<long> offsets;
  for (double f : offset_fracs) offsets.push_back(fraction_steps(f, base.steps));

  std::vector<std::pair<long, std::vector<double>>> curve;
  for (long off : offsets) curve.push_back({off, {}});
  bool any_finite = false;
  for (int trial = 0; trial < base.trials; ++trial) {
    ccpt::RunConfig cfg = base;
    cfg.seed = base.seed + std::uint64_t(trial);
    std::vector<ccpt::RunReport> reports;
    try {
      reports = ccpt::probe_sweep(cfg, window, offsets, bits);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    for (std::size_t i = 0; i < reports.size(); ++i)
      if (!reports[i].diverged) {
        curve[i].second.push_back(reports[i].final_test_metric);
        any_finite = true;
      }
  }
  ccpt::atomic_write_file(out, config_comment(ccpt::to_json(base)) +
                                   ccpt::sweep_curve_csv("offset", curve));
  if (!any_finite) {
    std::cerr << "all trials diverged\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cyclic precision training toolkit"};
  app.require_subcommand(1);

  std::string profile = "cosine", variant = "repeated", out;
  double steepness = 5.0;
  int n = 8, qmin = 3, qmax = 8;
  long steps = 1000;
  auto* emit = app.add_subcommand("sched-emit", "write a precision schedule trace as CSV");
  emit->add_option("--profile", profile, "linear|cosine|exponential|rex");
  emit->add_option("--variant", variant, "repeated|tv|th");
  emit->add_option("--steepness", steepness, "exponential steepness");
  emit->add_option("--n", n, "number of cycles");
  emit->add_option("--qmin", qmin, "minimum bits");
  emit->add_option("--qmax", qmax, "maximum bits");
  emit->add_option("--steps", steps, "total steps");
  emit->add_option("--out", out, "output CSV path")->required();

  std::string config_path, out_path, save_model;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config path")->required();
    sub->add_option("--out", out_path, "output path")->required();
    sub->add_option("--set", overrides, "override config keys, e.g. --set optimizer.lr=0.05");
  };
  auto* train = app.add_subcommand("train", "run one training experiment");
  add_common(train);
  train->add_option("--save-model", save_model, "write final parameters as a checkpoint");
  auto* sweep = app.add_subcommand("sweep", "run all ten schedules plus the static baseline");
  add_common(sweep);
  auto* range = app.add_subcommand("range-test", "discover the lowest viable precision");
  add_common(range);
  auto* deficit = app.add_subcommand("deficit", "initial low-precision deficit sweep over R");
  add_common(deficit);
  auto* probe = app.add_subcommand("probe", "sliding low-precision window sweep");
  add_common(probe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*emit)
      return cmd_sched_emit(profile, variant, steepness, n, qmin, qmax, steps, out);
    const json doc = load_config_doc(config_path, overrides);
    if (*train) return cmd_train(doc, out_path, save_model);
    if (*sweep) return cmd_sweep(doc, out_path);
    if (*range) return cmd_range_test(doc, out_path);
    if (*deficit) return cmd_deficit(doc, out_path);
    if (*probe) return cmd_probe(doc, out_path);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
