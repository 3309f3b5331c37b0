#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <vector>

namespace orgpose::org {

/// One detected object: pixel center, pixel box size and category id.
struct Detection {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  int category = 0;
  double confidence = 1.0;

  bool operator==(const Detection&) const = default;
};

struct ImageSize {
  double width = 640.0;
  double height = 480.0;
};

/// Throws ValidationError when the box is degenerate or the category is
/// outside [0, category_count).
void validate_detection(const Detection& det, int category_count);

/// Drops categories outside `allowlist`, then keeps round(keep_ratio * n)
/// of the survivors (at least one when any survive), chosen uniformly at
/// random from `seed`. Survivors keep their original order.
std::vector<Detection> filter_detections(std::span<const Detection> detections, const std::set<int>& allowlist,
                                         double keep_ratio, std::uint64_t seed);

/// keep_ratio only; every category allowed.
std::vector<Detection> subsample_detections(std::span<const Detection> detections, double keep_ratio,
                                            std::uint64_t seed);

}  // namespace orgpose::org
