#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "ripen/errors.hpp"
#include "ripen/rng.hpp"
#include "ripen/topology.hpp"

namespace ripen {

// C1 unripe, C2 stock, C3 grocery, C4 consumer.
enum class RipeningClass : int { C1 = 1, C2 = 2, C3 = 3, C4 = 4 };

inline constexpr std::array<double, 3> kThresholds{0.9, 0.8, 0.7};

inline int ordinal(RipeningClass c) { return static_cast<int>(c); }

inline RipeningClass class_from_ordinal(int n) {
  if (n < 1 || n > 4) throw DomainError("class ordinal out of range: " + std::to_string(n));
  return static_cast<RipeningClass>(n);
}

inline std::string to_string(RipeningClass c) { return "C" + std::to_string(ordinal(c)); }

inline RipeningClass class_from_string(std::string_view s) {
  if (s.size() == 2 && s[0] == 'C' && s[1] >= '1' && s[1] <= '4') return class_from_ordinal(s[1] - '0');
  throw DataError("bad ripening class '" + std::string(s) + "'");
}

inline RipeningClass classify_sh(double sh) {
  if (!(sh > 0.0 && sh <= 1.0))
    throw DomainError("normalized Shore value outside (0, 1]: " + std::to_string(sh));
  if (sh >= 0.9) return RipeningClass::C1;
  if (sh >= 0.8) return RipeningClass::C2;
  if (sh >= 0.7) return RipeningClass::C3;
  return RipeningClass::C4;
}

// True when a normalized Shore value has passed threshold index n (0.9, 0.8, 0.7).
inline bool crossed(double sh, std::size_t threshold_index) {
  return sh < kThresholds.at(threshold_index);
}

enum class Regime { Ambient, Accelerated };

inline Regime regime_from_string(std::string_view s) {
  if (s == "ambient") return Regime::Ambient;
  if (s == "accelerated") return Regime::Accelerated;
  throw ConfigError("unknown ripening regime '" + std::string(s) + "'");
}

inline std::string to_string(Regime r) { return r == Regime::Ambient ? "ambient" : "accelerated"; }

// Cohort-level distribution of the decay SH(t) = SH_min + (1 - SH_min) exp(-lambda t).
struct CohortProfile {
  Regime regime = Regime::Ambient;
  // Median time for a fruit with SH_min at the middle of its range to drop below 0.7.
  std::optional<double> median_c4_days;
  double sh_min_lo = 0.48;
  double sh_min_hi = 0.52;
  double lambda_log_sd = 0.07;

  double c4_days() const {
    if (median_c4_days) return *median_c4_days;
    return regime == Regime::Ambient ? 6.0 : 4.0;
  }

  void validate() const {
    if (!(sh_min_lo > 0.0 && sh_min_lo <= sh_min_hi && sh_min_hi < 0.7))
      throw ConfigError("SH_min range must satisfy 0 < lo <= hi < 0.7");
    if (!(c4_days() > 0.0)) throw ConfigError("median C4 crossing time must be positive");
    if (!(lambda_log_sd >= 0.0)) throw ConfigError("lambda spread must be non-negative");
  }

  // Decay rate (1/h) that puts the median fruit's 0.7 crossing at c4_days().
  double median_lambda() const {
    const double m = 0.5 * (sh_min_lo + sh_min_hi);
    return std::log((1.0 - m) / (0.7 - m)) / (c4_days() * 24.0);
  }
};

struct ShTrajectory {
  FruitId fruit;
  double sh_min = 0.5;
  double lambda_per_hour = 0.0;

  // Normalized Shore value after t hours; 1.0 at t <= 0.
  double sh(double t_hours) const {
    if (t_hours <= 0.0 || lambda_per_hour == 0.0) return 1.0;
    return sh_min + (1.0 - sh_min) * std::exp(-lambda_per_hour * t_hours);
  }

  // First time (hours) the value drops below `threshold`, if ever.
  std::optional<double> crossing_hours(double threshold) const {
    if (lambda_per_hour <= 0.0 || threshold <= sh_min) return std::nullopt;
    if (threshold >= 1.0) return 0.0;
    return std::log((1.0 - sh_min) / (threshold - sh_min)) / lambda_per_hour;
  }
};

inline ShTrajectory generate_trajectory(FruitId fruit, const CohortProfile& profile,
                                        std::uint64_t seed) {
  profile.validate();
  KeyedRng rng(mix_key({seed, 0x7472616AULL, static_cast<std::uint64_t>(fruit.ordinal)}));
  ShTrajectory t;
  t.fruit = fruit;
  t.sh_min = rng.uniform(profile.sh_min_lo, profile.sh_min_hi);
  t.lambda_per_hour = profile.median_lambda() * std::exp(rng.normal(0.0, profile.lambda_log_sd));
  return t;
}

}  // namespace ripen
