#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "ccpt/harness.hpp"
#include "ccpt/io.hpp"

using namespace ccpt;

namespace {

RunConfig spirals_config(long steps, int q_min = 3, int q_max = 8) {
  RunConfig cfg;
  cfg.model = MlpSpec{{16, 16}};
  cfg.data = TwoSpiralsSpec{50, 0.1};
  cfg.optimizer = OptimizerSpec{OptKind::SgdMomentum, 0.2, LrDecay::StepHalves, 1e-4, 0.9};
  ScheduleSpec s;
  s.profile.kind = ProfileKind::Cosine;
  s.variant = Variant::Repeated;
  s.n_cycles = 8;
  s.q_min = q_min;
  s.q_max = q_max;
  cfg.schedule = s;
  cfg.steps = steps;
  cfg.seed = 1;
  cfg.trials = 2;
  return cfg;
}

RunConfig sbm_config(long steps, AggMode agg) {
  RunConfig cfg;
  cfg.model = GcnSpec{{16}, agg};
  cfg.data = SbmSpec{10, 2, 0.9, 0.05, 4};
  cfg.optimizer = OptimizerSpec{OptKind::Adam, 0.02, LrDecay::CosineAnneal, 0.0, 0.9};
  cfg.schedule = StaticPrecision{8};
  cfg.steps = steps;
  cfg.seed = 3;
  cfg.trials = 2;
  return cfg;
}

bool reports_equal(const RunReport& a, const RunReport& b) {
  bool ok = a.diverged == b.diverged && a.train_loss == b.train_loss &&
            a.train_acc == b.train_acc && a.val_acc == b.val_acc &&
            a.final_test_metric == b.final_test_metric &&
            a.ledger.forward_bitops() == b.ledger.forward_bitops() &&
            a.ledger.backward_bitops() == b.ledger.backward_bitops() &&
            a.trace_digest == b.trace_digest && a.final_params.size() == b.final_params.size();
  if (!ok) return false;
  for (std::size_t i = 0; i < a.final_params.size(); ++i)
    if (a.final_params[i].data != b.final_params[i].data) return false;
  return true;
}

}  // namespace

TEST_CASE("empty run yields empty metrics and zero cost") {
  auto cfg = spirals_config(0);
  const auto report = run(cfg);
  CHECK(report.train_loss.empty());
  CHECK(report.val_acc.empty());
  CHECK(report.ledger.total_gbitops() == 0.0);
  CHECK_FALSE(report.diverged);
}

TEST_CASE("static schedule produces a constant trace") {
  auto cfg = spirals_config(20);
  cfg.schedule = StaticPrecision{8};
  const auto bits = forward_bits_trace(cfg);
  CHECK(bits == std::vector<int>(20, 8));
  CHECK(backward_bits(cfg) == 8);
}

TEST_CASE("cpt schedule trace honors the deficit override") {
  auto cfg = spirals_config(40);
  cfg.deficit = DeficitWindow{10, 20, 2, 8};
  const auto bits = forward_bits_trace(cfg);
  for (long t = 10; t < 20; ++t) CHECK(bits[std::size_t(t)] == 2);
  ScheduleSpec plain = std::get<ScheduleSpec>(cfg.schedule);
  plain.total_steps = 40;
  for (long t = 0; t < 40; ++t)
    if (t < 10 || t >= 20) CHECK(bits[std::size_t(t)] == precision_at(plain, t));
}

TEST_CASE("seeded runs are bit-identical across invocations") {
  auto cfg = spirals_config(60);
  const auto a = run(cfg);
  const auto b = run(cfg);
  CHECK(reports_equal(a, b));
  CHECK(a.train_loss.size() == 60);

  auto gcn = sbm_config(40, AggMode::QAgg);
  CHECK(reports_equal(run(gcn), run(gcn)));
}

TEST_CASE("quantization containment: a 32-bit schedule matches the static 32 run") {
  auto cpt = spirals_config(50, 32, 32);
  auto flat = spirals_config(50);
  flat.schedule = StaticPrecision{32};
  CHECK(reports_equal(run(cpt), run(flat)));
}

TEST_CASE("a deficit window equals the same run driven by an explicit two-level trace") {
  auto cfg = spirals_config(80);
  cfg.schedule = StaticPrecision{8};
  cfg.deficit = DeficitWindow{15, 40, 3, 8};
  const auto via_window = run(cfg);

  std::vector<int> bits(80, 8);
  for (long t = 15; t < 40; ++t) bits[std::size_t(t)] = 3;
  const auto via_bits = run_with_bits(cfg, bits, 8);
  CHECK(reports_equal(via_window, via_bits));
}

TEST_CASE("deficit sweep: R = 0 reproduces the plain run") {
  auto cfg = spirals_config(60);
  const auto baseline = run(cfg);
  const auto reports = deficit_sweep(cfg, {0, 30}, 2);
  REQUIRE(reports.size() == 2);
  CHECK(reports_equal(reports[0], baseline));
  CHECK(reports[1].train_loss.size() == 90);  // horizon extends by R
  const auto bits = forward_bits_trace([&] {
    RunConfig c = cfg;
    c.steps = 90;
    c.deficit = DeficitWindow{0, 30, 2, 8};
    return c;
  }());
  CHECK(bits[0] == 2);
  CHECK(bits[29] == 2);
  CHECK(bits[89] == 8);
}

TEST_CASE("probe sweep: zero-length window reproduces the baseline everywhere") {
  auto cfg = spirals_config(40);
  const auto baseline = run(cfg);
  const auto reports = probe_sweep(cfg, 0, {0, 10, 20}, 2);
  REQUIRE(reports.size() == 3);
  for (const auto& r : reports) CHECK(reports_equal(r, baseline));
}

TEST_CASE("probe sweep: one offset equals the equivalent deficit window run") {
  auto cfg = spirals_config(50);
  const auto reports = probe_sweep(cfg, 15, {10}, 2);
  RunConfig manual = cfg;
  manual.deficit = DeficitWindow{10, 25, 2, 8};
  CHECK(reports_equal(reports[0], run(manual)));
  CHECK_THROWS_AS(probe_sweep(cfg, 30, {40}, 2), std::invalid_argument);
}

TEST_CASE("mlp ledger matches the closed-form sum over the trace") {
  auto cfg = spirals_config(30);
  const auto report = run(cfg);
  const auto bits = forward_bits_trace(cfg);
  // two_spirals(50) -> 100 rows, 70 train; dims 2 -> 16 -> 16 -> 2
  const std::vector<double> flops{2.0 * 70 * 2 * 16, 2.0 * 70 * 16 * 16, 2.0 * 70 * 16 * 2};
  double fwd = 0.0, bwd = 0.0;
  for (int q : bits)
    for (double f : flops) {
      fwd += bitops(f, q, q);
      bwd += bitops(f, 8, q) + bitops(f, q, 8);
    }
  CHECK(report.ledger.forward_bitops() == Catch::Approx(fwd).epsilon(1e-12));
  CHECK(report.ledger.backward_bitops() == Catch::Approx(bwd).epsilon(1e-12));
}

TEST_CASE("gcn ledger distinguishes FpAgg from QAgg aggregation cost") {
  const long T = 10;
  auto qagg = sbm_config(T, AggMode::QAgg);
  auto fpagg = sbm_config(T, AggMode::FpAgg);
  const auto rq = run(qagg);
  const auto rf = run(fpagg);

  const int n = 20;
  const std::vector<std::pair<double, double>> flops{
      {2.0 * n * 4 * 16, 2.0 * n * n * 16}, {2.0 * n * 16 * 2, 2.0 * n * n * 2}};
  double fwd_q = 0.0, fwd_fp = 0.0;
  for (long t = 0; t < T; ++t)
    for (auto [feat, agg] : flops) {
      fwd_q += bitops(feat, 8, 8) + bitops(agg, 8, 8);
      fwd_fp += bitops(feat, 8, 8) + bitops(agg, 32, 32);
    }
  CHECK(rq.ledger.forward_bitops() == Catch::Approx(fwd_q).epsilon(1e-12));
  CHECK(rf.ledger.forward_bitops() == Catch::Approx(fwd_fp).epsilon(1e-12));
  CHECK(rf.ledger.forward_bitops() > rq.ledger.forward_bitops());
}

TEST_CASE("every cpt schedule is cheaper than the static baseline") {
  auto base = spirals_config(64);
  RunConfig flat = base;
  flat.schedule = StaticPrecision{8};
  const double baseline_total = run(flat).ledger.total_bitops();
  for (const auto& [profile, variant] : schedule_suite()) {
    RunConfig cfg = base;
    auto s = std::get<ScheduleSpec>(base.schedule);
    s.profile = profile;
    s.variant = variant;
    cfg.schedule = s;
    CHECK(run(cfg).ledger.total_bitops() < baseline_total);
  }
}

TEST_CASE("schedule sweep emits eleven rows with consistent cost ordering") {
  auto cfg = spirals_config(48);
  cfg.trials = 2;
  const auto rows = schedule_sweep(cfg);
  REQUIRE(rows.size() == 11);
  CHECK(rows.back().label == "STATIC");

  double rr = 0, rth = 0, large_max = 0, medium_min = 1e300, medium_max = 0, small_min = 1e300;
  for (const auto& row : rows) {
    if (row.label == "RR") rr = row.total_gbitops;
    if (row.label == "RTH") rth = row.total_gbitops;
    if (row.label == "RR" || row.label == "RTH")
      large_max = std::max(large_max, row.total_gbitops);
    else if (row.label == "ER" || row.label == "ETH")
      small_min = std::min(small_min, row.total_gbitops);
    else if (row.label != "STATIC") {
      medium_min = std::min(medium_min, row.total_gbitops);
      medium_max = std::max(medium_max, row.total_gbitops);
    }
  }
  CHECK(rr == rth);  // exact: permuted traces, integer flop accounting
  CHECK(large_max < medium_min);
  CHECK(medium_max < small_min);
  CHECK(small_min < rows.back().total_gbitops);

  for (const auto& row : rows) {
    CHECK(row.finite_trials == 2);
    CHECK(row.reports.size() == 2);
    CHECK(row.reports[0].seed == 1);
    CHECK(row.reports[1].seed == 2);
  }
}

TEST_CASE("precision range test basics") {
  auto cfg = spirals_config(100);
  // only the reference candidate: trivially q_max
  CHECK(precision_range_test(cfg, {8}) == 8);
  // high candidates all train fine: the smallest one wins
  CHECK(precision_range_test(cfg, {6, 7, 8}, 0.3) == 6);
  CHECK_THROWS_AS(precision_range_test(cfg, {}), std::invalid_argument);
  CHECK_THROWS_AS(precision_range_test(cfg, {1, 4}), std::invalid_argument);
  CHECK_THROWS_AS(precision_range_test(cfg, {5, 4}), std::invalid_argument);
}

TEST_CASE("precision range test is stable across seeds") {
  auto cfg = spirals_config(400);
  std::vector<int> picks;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.seed = seed;
    picks.push_back(precision_range_test(cfg, {2, 3, 4, 5, 6, 7, 8}, 0.5));
  }
  int modal = 0;
  for (int p : picks)
    modal = std::max(modal, int(std::count(picks.begin(), picks.end(), p)));
  CHECK(modal >= 4);
}

TEST_CASE("config json round trip and strict key checking") {
  auto cfg = spirals_config(30);
  cfg.deficit = DeficitWindow{1, 5, 2, 8};
  const json echo = to_json(cfg);
  const RunConfig back = config_from_json(echo);
  CHECK(to_json(back) == echo);

  auto gcn = sbm_config(12, AggMode::QAgg);
  CHECK(to_json(config_from_json(to_json(gcn))) == to_json(gcn));

  json bad = echo;
  bad["optimiser"] = {{"lr", 0.1}};
  CHECK_THROWS_MATCHES(config_from_json(bad), ConfigError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("optimiser")));

  json bad2 = echo;
  bad2["schedule"]["profile"] = "quadratic";
  CHECK_THROWS_AS(config_from_json(bad2), ConfigError);

  json bad3 = echo;
  bad3["deficit"]["end"] = 1000;  // outside the run
  CHECK_THROWS_AS(config_from_json(bad3), ConfigError);
}

TEST_CASE("report json carries the ledger interface shape") {
  auto cfg = spirals_config(8);
  const auto report = run(cfg);
  const json j = report_to_json(report);
  CHECK(j.at("ledger").contains("forward_gbitops"));
  CHECK(j.at("ledger").contains("backward_gbitops"));
  CHECK(j.at("ledger").contains("per_layer"));
  CHECK(j.at("ledger").at("per_layer").size() == 3);
  CHECK(j.at("config") == to_json(cfg));
  CHECK(double(j.at("ledger").at("forward_gbitops")) == report.ledger.forward_gbitops());

  // serialized json re-parses to identical values
  const json reparsed = json::parse(j.dump());
  CHECK(reparsed == j);
  CHECK(double(reparsed.at("final_test_metric")) == report.final_test_metric);
  CHECK(reparsed.at("metrics").at("train_loss").get<std::vector<double>>() == report.train_loss);
}

TEST_CASE("checkpoint round trip") {
  auto cfg = spirals_config(10);
  const auto report = run(cfg);
  const auto path =
      (std::filesystem::temp_directory_path() / "ccpt_test_checkpoint.bin").string();
  save_checkpoint(path, report.final_params);
  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == report.final_params.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].shape == report.final_params[i].shape);
    CHECK(loaded[i].data == report.final_params[i].data);
  }
  std::remove(path.c_str());
}

TEST_CASE("divergence is flagged and partial metrics retained") {
  auto cfg = spirals_config(200);
  cfg.optimizer.learning_rate = 1e9;  // guaranteed blow-up
  cfg.optimizer.decay = LrDecay::None;
  const auto report = run(cfg);
  CHECK(report.diverged);
  CHECK(report.train_loss.size() < 200);
}
