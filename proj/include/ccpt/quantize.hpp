#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "ccpt/schedule.hpp"
#include "ccpt/tensor.hpp"

namespace ccpt {

// Full-width sentinel: quantize() at 32 bits is an exact bypass.
inline constexpr int kFullPrecisionBits = 32;

inline void check_bits(int bits) {
  if (bits < 2 || bits > 32) throw std::invalid_argument("quantize: bits must be in [2, 32]");
}

// Simulated ("fake") quantization: symmetric per-tensor uniform grid with
// 2^(bits-1) - 1 positive levels and scale s = max|x| / (2^(bits-1) - 1).
// Values are snapped to the grid but kept in full-width storage. A zero
// tensor has no scale and is returned unchanged, as is any tensor at the
// 32-bit sentinel. Internal arithmetic is double so the reconstruction
// error stays within s/2 up to the final cast.
template <class T>
TensorT<T> quantize(const TensorT<T>& x, int bits) {
  check_bits(bits);
  if (!all_finite(x)) throw std::runtime_error("quantize: non-finite input");
  if (bits == kFullPrecisionBits) return x;

  const double amax = max_abs(x);
  if (amax == 0.0) return x;

  const double levels = double((1u << (bits - 1)) - 1);
  const double s = amax / levels;
  TensorT<T> y = x;
  for (auto& v : y.data) {
    double r = std::round(double(v) / s);  // half away from zero
    r = std::clamp(r, -levels, levels);
    v = T(r * s);
  }
  return y;
}

// Straight-through gradient rule for quantize(). Per-tensor max scaling
// never clips in-range values, so the estimator is an exact identity; this
// is the hook point should a clipped variant ever need a masked pass-through.
template <class T>
TensorT<T> quantize_ste_backward(const TensorT<T>& upstream_grad, const TensorT<T>& x, int bits) {
  check_bits(bits);
  if (!same_shape(upstream_grad, x))
    throw std::invalid_argument("quantize_ste_backward: shape mismatch");
  return upstream_grad;
}

// max elementwise |x - quantize(x, bits)|; at most s/2 plus the
// final-cast rounding of the output
template <class T>
double quantization_error(const TensorT<T>& x, int bits) {
  const TensorT<T> q = quantize(x, bits);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, std::abs(double(x.data[i]) - double(q.data[i])));
  return worst;
}

// Per-iteration bit-width source for a training run: the forward pass
// follows a schedule (or a constant), the backward pass stays fixed at the
// schedule's q_max.
struct QuantPolicy {
  std::optional<ScheduleSpec> schedule;
  int constant_bits = kFullPrecisionBits;
  int backward_bits = kFullPrecisionBits;

  static QuantPolicy from_schedule(const ScheduleSpec& s) {
    validate_spec(s);
    QuantPolicy p;
    p.schedule = s;
    p.backward_bits = s.q_max;
    return p;
  }

  static QuantPolicy constant(int bits) {
    check_bits(bits);
    QuantPolicy p;
    p.constant_bits = bits;
    p.backward_bits = bits;
    return p;
  }

  int forward_bits(long t) const {
    return schedule ? precision_at(*schedule, t) : constant_bits;
  }
};

}  // namespace ccpt
