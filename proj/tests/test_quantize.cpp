#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ccpt/prng.hpp"
#include "ccpt/quantize.hpp"

using namespace ccpt;

namespace {

Tensor vec(std::vector<float> v) { return Tensor({int(v.size())}, std::move(v)); }

Tensor random_tensor(SplitMix64& rng, int n, double scale = 1.0) {
  Tensor t({n});
  for (auto& v : t.data) v = float(scale * rng.uniform(-1.0, 1.0));
  return t;
}

}  // namespace

TEST_CASE("quantize known values") {
  // on-grid at 2 bits (levels -1, 0, 1)
  auto q = quantize(vec({-1.f, 0.f, 1.f}), 2);
  CHECK(q.data == std::vector<float>{-1.f, 0.f, 1.f});

  // zero tensor bypasses (no scale)
  auto z = quantize(vec({0.f, 0.f, 0.f}), 4);
  CHECK(z.data == std::vector<float>{0.f, 0.f, 0.f});

  // s = 0.5/3; 0.25 -> 2s, -0.1 -> -1s (half away from zero)
  auto h = quantize(vec({0.5f, 0.25f, -0.1f}), 3);
  CHECK(h.data[0] == Catch::Approx(0.5).margin(1e-7));
  CHECK(h.data[1] == Catch::Approx(1.0 / 3.0).margin(1e-6));
  CHECK(h.data[2] == Catch::Approx(-1.0 / 6.0).margin(1e-6));

  // the max-magnitude element always lands on the grid exactly
  auto m = quantize(vec({0.3f}), 8);
  CHECK(m.data[0] == 0.3f);

  // 32 bits is a bypass
  auto full = quantize(vec({0.123f, -0.987f}), 32);
  CHECK(full.data == std::vector<float>{0.123f, -0.987f});
}

TEST_CASE("quantize rejects bad inputs") {
  CHECK_THROWS_AS(quantize(vec({1.f}), 1), std::invalid_argument);
  CHECK_THROWS_AS(quantize(vec({1.f}), 33), std::invalid_argument);
  CHECK_THROWS_AS(quantize(vec({std::numeric_limits<float>::infinity()}), 8),
                  std::runtime_error);
  CHECK_THROWS_AS(quantize(vec({std::nanf("")}), 8), std::runtime_error);
}

TEST_CASE("quantization_error known values and bound") {
  CHECK(quantization_error(vec({-1.f, 0.f, 1.f}), 2) == 0.0);
  CHECK(quantization_error(vec({0.5f, 0.25f, -0.1f}), 3) == Catch::Approx(1.0 / 12.0).margin(1e-6));

  SplitMix64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_tensor(rng, 64, rng.uniform(0.01, 100.0));
    for (int bits : {2, 3, 4, 8, 12, 16}) {
      const double amax = max_abs(x);
      const double s = amax / double((1u << (bits - 1)) - 1);
      // s/2 plus the float cast of the output
      CHECK(quantization_error(x, bits) <= 0.5 * s + amax * 0x1.0p-23);
    }
  }
}

TEST_CASE("quantize is idempotent") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_tensor(rng, 48);
    for (int bits : {2, 3, 5, 8, 16}) {
      const auto q1 = quantize(x, bits);
      const auto q2 = quantize(q1, bits);
      CHECK(q1.data == q2.data);
    }
  }
}

TEST_CASE("quantization error is monotone in bits on random tensors") {
  SplitMix64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_tensor(rng, 64);
    double prev = 1e300;
    for (int bits = 2; bits <= 16; ++bits) {
      const double err = quantization_error(x, bits);
      CHECK(err <= prev + 1e-12);
      prev = err;
    }
  }
}

TEST_CASE("quantize preserves the sign of elements above half a step") {
  SplitMix64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_tensor(rng, 64);
    for (int bits : {2, 3, 4, 8}) {
      const double s = max_abs(x) / double((1u << (bits - 1)) - 1);
      const auto q = quantize(x, bits);
      for (std::size_t i = 0; i < x.size(); ++i)
        if (std::abs(double(x.data[i])) > 0.5 * s)
          CHECK(double(q.data[i]) * double(x.data[i]) > 0.0);
    }
  }
}

TEST_CASE("quantize is scale equivariant") {
  SplitMix64 rng(19);
  // power-of-two scales commute exactly
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_tensor(rng, 32);
    for (double c : {0.25, 0.5, 2.0, 8.0, -4.0}) {
      for (int bits : {2, 3, 8}) {
        Tensor cx = x;
        for (auto& v : cx.data) v = float(c * double(v));
        const auto qcx = quantize(cx, bits);
        auto cqx = quantize(x, bits);
        for (auto& v : cqx.data) v = float(c * double(v));
        CHECK(qcx.data == cqx.data);
      }
    }
  }
  // arbitrary scales commute within float rounding (seeded; no grid-edge hits)
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_tensor(rng, 32);
    const double c = rng.uniform(0.3, 3.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    for (int bits : {2, 3, 8}) {
      Tensor cx = x;
      for (auto& v : cx.data) v = float(c * double(v));
      const auto qcx = quantize(cx, bits);
      auto cqx = quantize(x, bits);
      for (auto& v : cqx.data) v = float(c * double(v));
      const double denom = max_abs(qcx) + 1e-30;
      for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::abs(double(qcx.data[i]) - double(cqx.data[i])) / denom < 1e-6);
    }
  }
}

TEST_CASE("straight-through backward is the identity") {
  auto up = vec({1.f, 2.f, 3.f});
  auto x = vec({0.1f, -5.f, 0.f});
  CHECK(quantize_ste_backward(up, x, 4).data == up.data);
  CHECK(quantize_ste_backward(vec({0.f, 0.f}), vec({1.f, 2.f}), 2).data ==
        std::vector<float>{0.f, 0.f});
  CHECK(quantize_ste_backward(vec({0.1f}), vec({5.f}), 2).data == std::vector<float>{0.1f});
  CHECK_THROWS_AS(quantize_ste_backward(vec({1.f}), vec({1.f, 2.f}), 4), std::invalid_argument);
}

TEST_CASE("QuantPolicy ties backward bits to the schedule's q_max") {
  ScheduleSpec s;
  s.profile.kind = ProfileKind::Cosine;
  s.n_cycles = 2;
  s.q_min = 3;
  s.q_max = 8;
  s.total_steps = 10;
  const auto policy = QuantPolicy::from_schedule(s);
  CHECK(policy.backward_bits == 8);
  CHECK(policy.forward_bits(0) == 3);
  CHECK(policy.forward_bits(9) == 8);

  const auto fixed = QuantPolicy::constant(6);
  CHECK(fixed.backward_bits == 6);
  CHECK(fixed.forward_bits(123) == 6);
}
