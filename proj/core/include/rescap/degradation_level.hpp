// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <string_view>

namespace rescap {

enum class DegradationLevel { light, moderate, heavy };

inline constexpr std::array<DegradationLevel, 3> kAllLevels = {
    DegradationLevel::light, DegradationLevel::moderate, DegradationLevel::heavy};

std::string_view to_string(DegradationLevel level);
DegradationLevel parse_level(std::string_view name);

struct LevelClassification {
  DegradationLevel level;
  /// True when the zoom ratio falls outside every documented bucket
  /// (below 3, between 7 and 8, between 10 and 15, above 20).
  bool out_of_range = false;
};

/// Buckets a capture zoom ratio: [3,7] light, [8,10] moderate, [15,20] heavy.
/// Values in the gaps go to the bucket with the nearest boundary; ties go to
/// the heavier bucket.
LevelClassification classify_degradation(double zoom_ratio);

}  // namespace rescap
