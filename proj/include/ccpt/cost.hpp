#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccpt/schedule.hpp"

namespace ccpt {

// Effective bit operations of a dot-product workload: the FLOP count scaled
// by both operands' bit-widths relative to 32.
inline double bitops(double flop, int bits_a, int bits_b) {
  if (flop < 0.0) throw std::invalid_argument("bitops: flop must be nonnegative");
  if (bits_a < 1 || bits_a > 32 || bits_b < 1 || bits_b > 32)
    throw std::invalid_argument("bitops: bit-widths must be in [1, 32]");
  return flop * (double(bits_a) / 32.0) * (double(bits_b) / 32.0);
}

inline constexpr double kGigaBitOps = 1e9;

// Append-only accounting of effective BitOps for one training run, split by
// pass direction and by layer. Layers must be registered before charging.
// One ledger is owned by one run; merging is a plain associative fold.
class CostLedger {
 public:
  struct LayerCost {
    double forward = 0.0;
    double backward = 0.0;
  };

  void add_layer(const std::string& id) { layers_.emplace(id, LayerCost{}); }

  bool has_layer(const std::string& id) const { return layers_.count(id) != 0; }

  // one forward GEMM at (q_t, q_t)
  void charge_forward(const std::string& layer, double flop, int q_t) {
    entry(layer).forward += bitops(flop, q_t, q_t);
  }

  // the standard backward charge: input-gradient and weight-gradient GEMMs,
  // each pairing the fixed-precision gradient with a q_t operand
  void charge_backward(const std::string& layer, double flop, int q_max, int q_t) {
    entry(layer).backward += bitops(flop, q_max, q_t) + bitops(flop, q_t, q_max);
  }

  // a single backward GEMM with explicit operand widths (aggregation etc.)
  void charge_backward_gemm(const std::string& layer, double flop, int bits_a, int bits_b) {
    entry(layer).backward += bitops(flop, bits_a, bits_b);
  }

  double forward_bitops() const {
    double s = 0.0;
    for (const auto& [id, c] : layers_) s += c.forward;
    return s;
  }

  double backward_bitops() const {
    double s = 0.0;
    for (const auto& [id, c] : layers_) s += c.backward;
    return s;
  }

  double total_bitops() const { return forward_bitops() + backward_bitops(); }

  double forward_gbitops() const { return forward_bitops() / kGigaBitOps; }
  double backward_gbitops() const { return backward_bitops() / kGigaBitOps; }
  double total_gbitops() const { return total_bitops() / kGigaBitOps; }

  const std::map<std::string, LayerCost>& per_layer() const { return layers_; }

  void merge(const CostLedger& other) {
    for (const auto& [id, c] : other.layers_) {
      auto& mine = layers_[id];
      mine.forward += c.forward;
      mine.backward += c.backward;
    }
  }

 private:
  LayerCost& entry(const std::string& layer) {
    auto it = layers_.find(layer);
    if (it == layers_.end()) throw std::invalid_argument("ledger: unknown layer " + layer);
    return it->second;
  }

  std::map<std::string, LayerCost> layers_;
};

namespace detail {

// integer sums over a trace keep the arithmetic exact, so permuted traces
// (RR vs RTH, ER vs ETH) cost exactly the same
struct TraceSums {
  long long sum_q = 0;
  long long sum_q2 = 0;
};

inline TraceSums trace_sums(const std::vector<int>& bits) {
  TraceSums s;
  for (int q : bits) {
    s.sum_q += q;
    s.sum_q2 += (long long)q * q;
  }
  return s;
}

}  // namespace detail

// Total BitOps of a run under `spec` relative to a run at constant q_max
// with identical per-step FLOPs: forward GEMMs at (q_t, q_t) and two
// backward GEMMs per layer at (q_max, q_t). The per-layer FLOPs scale both
// sides equally, so the ratio depends on the trace alone.
inline double schedule_cost_ratio(const ScheduleSpec& spec, const std::vector<double>& layer_flops) {
  if (layer_flops.empty())
    throw std::invalid_argument("schedule_cost_ratio: layer_flops must be nonempty");
  for (double f : layer_flops)
    if (f < 0.0) throw std::invalid_argument("schedule_cost_ratio: flops must be nonnegative");
  const auto s = detail::trace_sums(trace(spec));
  const double q_max = spec.q_max;
  const double numer = double(s.sum_q2) + 2.0 * q_max * double(s.sum_q);
  const double denom = 3.0 * double(spec.total_steps) * q_max * q_max;
  return numer / denom;
}

// Same ratio restricted to the forward pass; lies in [(q_min/q_max)^2, 1].
inline double forward_cost_ratio(const ScheduleSpec& spec) {
  const auto s = detail::trace_sums(trace(spec));
  return double(s.sum_q2) / (double(spec.total_steps) * spec.q_max * spec.q_max);
}

}  // namespace ccpt
