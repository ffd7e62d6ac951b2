#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "ccpt/cost.hpp"
#include "ccpt/schedule.hpp"

using namespace ccpt;

namespace {

ScheduleSpec make(ProfileKind kind, Variant v, int n, int qmin, int qmax, long steps) {
  ScheduleSpec s;
  s.profile.kind = kind;
  s.variant = v;
  s.n_cycles = n;
  s.q_min = qmin;
  s.q_max = qmax;
  s.total_steps = steps;
  return s;
}

}  // namespace

TEST_CASE("bitops formula") {
  CHECK(bitops(1024, 8, 8) == 64.0);
  CHECK(bitops(12345.0, 32, 32) == 12345.0);
  CHECK(bitops(2000, 3, 8) == Catch::Approx(46.875));
  CHECK_THROWS_AS(bitops(-1.0, 8, 8), std::invalid_argument);
  CHECK_THROWS_AS(bitops(1.0, 0, 8), std::invalid_argument);
  CHECK_THROWS_AS(bitops(1.0, 8, 33), std::invalid_argument);
}

TEST_CASE("bitops is bilinear in the widths and linear in flop") {
  CHECK(bitops(10, 4, 16) == Catch::Approx(10.0 * 4 * 16 / 1024.0));
  CHECK(bitops(30, 4, 16) == Catch::Approx(3.0 * bitops(10, 4, 16)));
  CHECK(bitops(10, 8, 16) == Catch::Approx(2.0 * bitops(10, 4, 16)));
}

TEST_CASE("ledger charging") {
  CostLedger ledger;
  ledger.add_layer("fc0");

  SECTION("empty run has zero totals") {
    CHECK(ledger.forward_bitops() == 0.0);
    CHECK(ledger.backward_bitops() == 0.0);
  }

  SECTION("forward charge at (q_t, q_t)") {
    ledger.charge_forward("fc0", 100, 8);
    CHECK(ledger.forward_bitops() == Catch::Approx(6.25));
    CHECK(ledger.backward_bitops() == 0.0);
  }

  SECTION("backward charge is two GEMMs at (q_max, q_t)") {
    ledger.charge_backward("fc0", 100, 8, 3);
    CHECK(ledger.backward_bitops() == Catch::Approx(4.6875));
  }

  SECTION("unknown layer is a domain error") {
    CHECK_THROWS_AS(ledger.charge_forward("nope", 1, 8), std::invalid_argument);
    CHECK_THROWS_AS(ledger.charge_backward("nope", 1, 8, 3), std::invalid_argument);
  }
}

TEST_CASE("ledger additivity and totals equal per-layer sums") {
  CostLedger ledger;
  ledger.add_layer("a");
  ledger.add_layer("b");
  auto charge_run = [&] {
    ledger.charge_forward("a", 100, 4);
    ledger.charge_forward("b", 300, 6);
    ledger.charge_backward("a", 100, 8, 4);
    ledger.charge_backward_gemm("b", 300, 8, 6);
  };
  charge_run();
  const auto once = ledger.per_layer();
  const double fwd_once = ledger.forward_bitops(), bwd_once = ledger.backward_bitops();
  charge_run();
  for (const auto& [id, c] : ledger.per_layer()) {
    CHECK(c.forward == Catch::Approx(2.0 * once.at(id).forward));
    CHECK(c.backward == Catch::Approx(2.0 * once.at(id).backward));
  }
  CHECK(ledger.forward_bitops() == Catch::Approx(2.0 * fwd_once));
  CHECK(ledger.backward_bitops() == Catch::Approx(2.0 * bwd_once));

  double per_layer_fwd = 0.0, per_layer_bwd = 0.0;
  for (const auto& [id, c] : ledger.per_layer()) {
    per_layer_fwd += c.forward;
    per_layer_bwd += c.backward;
  }
  CHECK(ledger.forward_bitops() == Catch::Approx(per_layer_fwd));
  CHECK(ledger.backward_bitops() == Catch::Approx(per_layer_bwd));
}

TEST_CASE("ledger merge is an associative fold") {
  CostLedger a, b;
  a.add_layer("x");
  b.add_layer("x");
  b.add_layer("y");
  a.charge_forward("x", 100, 8);
  b.charge_forward("x", 50, 8);
  b.charge_backward("y", 10, 8, 4);
  CostLedger merged = a;
  merged.merge(b);
  CHECK(merged.per_layer().at("x").forward ==
        Catch::Approx(a.per_layer().at("x").forward + b.per_layer().at("x").forward));
  CHECK(merged.per_layer().at("y").backward == Catch::Approx(b.per_layer().at("y").backward));
}

TEST_CASE("schedule_cost_ratio basics") {
  // constant schedule (q_min == q_max) costs exactly the baseline
  auto flat = make(ProfileKind::Linear, Variant::Repeated, 2, 8, 8, 100);
  CHECK(schedule_cost_ratio(flat, {1000.0}) == 1.0);

  // the stock CR setting comes in clearly below 3/4 of the baseline
  auto cr = make(ProfileKind::Cosine, Variant::Repeated, 8, 3, 8, 64000);
  CHECK(schedule_cost_ratio(cr, {1000.0, 2000.0}) < 0.75);

  CHECK_THROWS_AS(schedule_cost_ratio(cr, {}), std::invalid_argument);
}

TEST_CASE("RR and RTH cost exactly the same (trace permutation)") {
  for (long steps : {1000L, 8000L, 64000L}) {
    auto rr = make(ProfileKind::Rex, Variant::Repeated, 8, 3, 8, steps);
    auto rth = make(ProfileKind::Rex, Variant::TriangularHorizontal, 8, 3, 8, steps);
    CHECK(schedule_cost_ratio(rr, {123.0}) == schedule_cost_ratio(rth, {123.0}));
    CHECK(forward_cost_ratio(rr) == forward_cost_ratio(rth));
  }
}

TEST_CASE("forward-only cost ratio bounds") {
  for (const auto& [profile, variant] : schedule_suite()) {
    auto s = make(profile.kind, variant, 8, 3, 8, 8000);
    const double r = forward_cost_ratio(s);
    CHECK(r >= (3.0 / 8.0) * (3.0 / 8.0));
    CHECK(r <= 1.0);
    CHECK(schedule_cost_ratio(s, {1.0}) < 1.0);
  }
}

TEST_CASE("group ordering of cost ratios at the stock setting") {
  std::map<Group, std::pair<double, double>> extremes;  // group -> (min, max)
  for (const auto& [profile, variant] : schedule_suite()) {
    auto s = make(profile.kind, variant, 8, 3, 8, 8000);
    const double r = schedule_cost_ratio(s, {1.0});
    const Group g = classify_group(profile, variant);
    auto it = extremes.find(g);
    if (it == extremes.end())
      extremes[g] = {r, r};
    else {
      it->second.first = std::min(it->second.first, r);
      it->second.second = std::max(it->second.second, r);
    }
  }
  CHECK(extremes.at(Group::Large).second < extremes.at(Group::Medium).first);
  CHECK(extremes.at(Group::Medium).second < extremes.at(Group::Small).first);
  CHECK(extremes.at(Group::Small).second < 1.0);
}
