#pragma once

#include <compare>
#include <span>

namespace ruleharvest {

// One binary threshold test over a feature column. LE is inclusive: a value
// exactly at the threshold routes left.
enum class SplitDirection { LE, GT };

struct SplitTest {
  int feature_index = 0;
  double threshold = 0.0;
  SplitDirection direction = SplitDirection::LE;

  bool matches(std::span<const double> x) const {
    const double v = x[static_cast<size_t>(feature_index)];
    return direction == SplitDirection::LE ? v <= threshold : v > threshold;
  }

  friend auto operator<=>(const SplitTest&, const SplitTest&) = default;
};

}  // namespace ruleharvest
