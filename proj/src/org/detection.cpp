#include "orgpose/org/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "orgpose/error.hpp"

namespace orgpose::org {

void validate_detection(const Detection& det, int category_count) {
  if (!(det.w > 0.0) || !(det.h > 0.0)) throw ValidationError("detection box must have positive width and height");
  if (!std::isfinite(det.x) || !std::isfinite(det.y)) throw ValidationError("detection center is not finite");
  if (det.category < 0 || det.category >= category_count) {
    throw ValidationError("unknown detection category " + std::to_string(det.category));
  }
}

std::vector<Detection> subsample_detections(std::span<const Detection> detections, double keep_ratio,
                                            std::uint64_t seed) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ConfigError("keep_ratio", "must lie in (0, 1]");
  const std::size_t n = detections.size();
  if (n == 0 || keep_ratio == 1.0) return {detections.begin(), detections.end()};
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(keep_ratio * static_cast<double>(n))));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(keep, n));
  std::sort(order.begin(), order.end());
  std::vector<Detection> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(detections[i]);
  return out;
}

std::vector<Detection> filter_detections(std::span<const Detection> detections, const std::set<int>& allowlist,
                                         double keep_ratio, std::uint64_t seed) {
  std::vector<Detection> allowed;
  allowed.reserve(detections.size());
  for (const auto& d : detections) {
    if (allowlist.contains(d.category)) allowed.push_back(d);
  }
  return subsample_detections(allowed, keep_ratio, seed);
}

}  // namespace orgpose::org
