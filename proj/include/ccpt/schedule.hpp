#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccpt {

// Growth profile g : [0,1] -> [0,1] followed by the precision within one
// cycle. All profiles satisfy g(0) = 0, g(1) = 1 and are nondecreasing.
//
//   Linear       g(u) = u
//   Cosine       g(u) = (1 - cos(pi u)) / 2
//   Exponential  g(u) = (1 - e^{-ku}) / (1 - e^{-k})        (fast rise)
//   Rex          g(u) = u / (2 - u)                          (slow rise)
enum class ProfileKind { Linear, Cosine, Exponential, Rex };

// How the cycles of a schedule are strung together. Repeated grows from
// q_min to q_max in every cycle. The triangular variants reflect every
// even-indexed (0-based) cycle so adjacent cycles run in opposite
// directions: horizontal reflection reverses time, g(1-u); vertical
// reflection flips the value, 1 - g(u). For symmetric profiles (Linear,
// Cosine) the two reflections coincide.
enum class Variant { Repeated, TriangularVertical, TriangularHorizontal };

// Training-cost groups: Large saves the most compute, Small the least.
enum class Group { Small, Medium, Large };

struct Profile {
  ProfileKind kind = ProfileKind::Linear;
  double steepness = 5.0;  // Exponential only
};

inline double profile_value(const Profile& p, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("profile_value: u outside [0,1]");
  switch (p.kind) {
    case ProfileKind::Linear:
      return u;
    case ProfileKind::Cosine:
      return 0.5 * (1.0 - std::cos(std::numbers::pi * u));
    case ProfileKind::Exponential: {
      if (!(p.steepness > 0.0))
        throw std::invalid_argument("profile_value: steepness must be positive");
      const double k = p.steepness;
      return (1.0 - std::exp(-k * u)) / (1.0 - std::exp(-k));
    }
    case ProfileKind::Rex:
      return u / (2.0 - u);
  }
  throw std::logic_error("profile_value: unknown profile kind");
}

// arithmetic mean of g over the uniform grid u_i = i / (grid_points - 1)
inline double mean_profile_value(const Profile& p, int grid_points) {
  if (grid_points < 2) throw std::invalid_argument("mean_profile_value: need at least 2 points");
  double sum = 0.0;
  for (int i = 0; i < grid_points; ++i) sum += profile_value(p, double(i) / (grid_points - 1));
  return sum / grid_points;
}

// One cyclic precision schedule over a fixed training horizon. The step t
// is mapped to an integer bit-width in [q_min, q_max]; every schedule ends
// at q_max so training finishes at full target precision.
struct ScheduleSpec {
  Profile profile;
  Variant variant = Variant::Repeated;
  int n_cycles = 8;
  int q_min = 3;
  int q_max = 8;
  long total_steps = 1;
};

inline void validate_spec(const ScheduleSpec& s) {
  if (s.q_min < 2 || s.q_max > 32 || s.q_min > s.q_max)
    throw std::invalid_argument("schedule: require 2 <= q_min <= q_max <= 32");
  if (s.n_cycles < 1) throw std::invalid_argument("schedule: n_cycles must be positive");
  if (s.total_steps < 1) throw std::invalid_argument("schedule: total_steps must be positive");
  if (s.variant != Variant::Repeated && s.n_cycles % 2 != 0)
    throw std::invalid_argument("schedule: triangular variants need an even n_cycles");
  if (s.profile.kind == ProfileKind::Exponential && !(s.profile.steepness > 0.0))
    throw std::invalid_argument("schedule: steepness must be positive");
}

// half away from zero, the fixed tie rule for precision rounding
inline long round_half_away(double x) { return std::llround(x); }

inline int precision_at(const ScheduleSpec& spec, long t) {
  validate_spec(spec);
  if (t < 0 || t >= spec.total_steps)
    throw std::invalid_argument("precision_at: step index out of range");

  const long n = spec.n_cycles;
  const long base_len = spec.total_steps / n;  // last cycle absorbs the remainder
  long cycle, pos, len;
  if (base_len == 0) {
    cycle = n - 1;
    pos = t;
    len = spec.total_steps;
  } else {
    cycle = std::min(t / base_len, n - 1);
    pos = t - cycle * base_len;
    len = (cycle == n - 1) ? spec.total_steps - (n - 1) * base_len : base_len;
  }
  // phase u = pos / (len - 1) so g(1) = 1 is sampled once per cycle; a
  // one-step cycle sits at u = 1 and still ends on q_max
  const double u = (len == 1) ? 1.0 : double(pos) / double(len - 1);

  const bool reflected = spec.variant != Variant::Repeated && cycle % 2 == 0;
  double g;
  if (!reflected)
    g = profile_value(spec.profile, u);
  else if (spec.variant == Variant::TriangularHorizontal)
    g = profile_value(spec.profile, 1.0 - u);
  else
    g = 1.0 - profile_value(spec.profile, u);

  const double s = spec.q_min + (spec.q_max - spec.q_min) * g;
  return int(round_half_away(s));
}

inline std::vector<int> trace(const ScheduleSpec& spec) {
  validate_spec(spec);
  std::vector<int> bits(std::size_t(spec.total_steps));
  for (long t = 0; t < spec.total_steps; ++t) bits[std::size_t(t)] = precision_at(spec, t);
  return bits;
}

inline Group classify_group(const Profile& profile, Variant variant) {
  switch (profile.kind) {
    case ProfileKind::Linear:
    case ProfileKind::Cosine:
      return Group::Medium;
    case ProfileKind::Rex:
      return variant == Variant::TriangularVertical ? Group::Medium : Group::Large;
    case ProfileKind::Exponential:
      return variant == Variant::TriangularVertical ? Group::Medium : Group::Small;
  }
  throw std::logic_error("classify_group: unknown profile kind");
}

// Short name of a (profile, variant) pair: LR, LT, CR, CT, RR, RTV, RTH,
// ER, ETV, ETH. Symmetric profiles collapse both triangular flavors to
// one name.
inline std::string schedule_name(const Profile& profile, Variant variant) {
  const bool symmetric =
      profile.kind == ProfileKind::Linear || profile.kind == ProfileKind::Cosine;
  std::string s;
  switch (profile.kind) {
    case ProfileKind::Linear: s = "L"; break;
    case ProfileKind::Cosine: s = "C"; break;
    case ProfileKind::Rex: s = "R"; break;
    case ProfileKind::Exponential: s = "E"; break;
  }
  switch (variant) {
    case Variant::Repeated: return s + "R";
    case Variant::TriangularVertical: return symmetric ? s + "T" : s + "TV";
    case Variant::TriangularHorizontal: return symmetric ? s + "T" : s + "TH";
  }
  throw std::logic_error("schedule_name: unknown variant");
}

// The full suite of ten distinct schedules (symmetric profiles contribute
// one triangular entry each).
inline std::vector<std::pair<Profile, Variant>> schedule_suite() {
  const Profile lin{ProfileKind::Linear, 5.0};
  const Profile cos{ProfileKind::Cosine, 5.0};
  const Profile rex{ProfileKind::Rex, 5.0};
  const Profile exp{ProfileKind::Exponential, 5.0};
  return {
      {lin, Variant::Repeated},  {lin, Variant::TriangularVertical},
      {cos, Variant::Repeated},  {cos, Variant::TriangularVertical},
      {rex, Variant::Repeated},  {rex, Variant::TriangularVertical},
      {rex, Variant::TriangularHorizontal},
      {exp, Variant::Repeated},  {exp, Variant::TriangularVertical},
      {exp, Variant::TriangularHorizontal},
  };
}

// CSV with header "step,bits", one row per step, LF line endings, no
// trailing delimiter.
inline void write_trace_csv(const ScheduleSpec& spec, std::ostream& os) {
  os << "step,bits\n";
  const auto bits = trace(spec);
  for (std::size_t t = 0; t < bits.size(); ++t) os << t << ',' << bits[t] << '\n';
}

inline ProfileKind parse_profile_kind(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) {
    return char(std::tolower(c));
  });
  if (name == "linear") return ProfileKind::Linear;
  if (name == "cosine") return ProfileKind::Cosine;
  if (name == "exponential" || name == "exp") return ProfileKind::Exponential;
  if (name == "rex") return ProfileKind::Rex;
  throw std::invalid_argument("unknown profile: " + name);
}

inline Variant parse_variant(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) {
    return char(std::tolower(c));
  });
  if (name == "repeated") return Variant::Repeated;
  if (name == "triangular-vertical" || name == "tv") return Variant::TriangularVertical;
  if (name == "triangular-horizontal" || name == "th") return Variant::TriangularHorizontal;
  throw std::invalid_argument("unknown variant: " + name);
}

}  // namespace ccpt
