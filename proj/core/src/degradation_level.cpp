// SPDX-License-Identifier: Apache-2.0
#include "rescap/degradation_level.hpp"

#include <cmath>

#include "rescap/errors.hpp"

namespace rescap {

std::string_view to_string(DegradationLevel level) {
  switch (level) {
    case DegradationLevel::light: return "light";
    case DegradationLevel::moderate: return "moderate";
    case DegradationLevel::heavy: return "heavy";
  }
  return "light";
}

DegradationLevel parse_level(std::string_view name) {
  if (name == "light") return DegradationLevel::light;
  if (name == "moderate") return DegradationLevel::moderate;
  if (name == "heavy") return DegradationLevel::heavy;
  throw InvalidInputError("unknown degradation level '" + std::string(name) + "'");
}

LevelClassification classify_degradation(double zoom_ratio) {
  if (!(zoom_ratio > 0.0) || !std::isfinite(zoom_ratio))
    throw InvalidInputError("zoom ratio must be a positive finite number");

  struct Bucket {
    double lo, hi;
    DegradationLevel level;
  };
  constexpr Bucket kBuckets[] = {
      {3.0, 7.0, DegradationLevel::light},
      {8.0, 10.0, DegradationLevel::moderate},
      {15.0, 20.0, DegradationLevel::heavy},
  };
  for (const auto& b : kBuckets)
    if (zoom_ratio >= b.lo && zoom_ratio <= b.hi) return {b.level, false};

  if (zoom_ratio < kBuckets[0].lo) return {DegradationLevel::light, true};
  if (zoom_ratio > kBuckets[2].hi) return {DegradationLevel::heavy, true};
  for (int i = 0; i + 1 < 3; ++i) {
    const auto& below = kBuckets[i];
    const auto& above = kBuckets[i + 1];
    if (zoom_ratio > below.hi && zoom_ratio < above.lo) {
      const double to_below = zoom_ratio - below.hi;
      const double to_above = above.lo - zoom_ratio;
      return {to_below < to_above ? below.level : above.level, true};
    }
  }
  return {DegradationLevel::heavy, true};
}

}  // namespace rescap
