#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlpvo/features.hpp"

namespace mlpvo {

struct DepthFilterParams {
  double eta = 1.2;            // band half-width in standard deviations
  std::size_t min_points = 5;  // below this the filter is skipped

  bool valid() const { return eta > 0.0 && min_points >= 2; }
};

enum class ObjectClass { kPotentiallyDynamic, kStatic };

/// Axis-aligned detection box in pixel coordinates.
struct BoundingBox {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;
  ObjectClass object_class = ObjectClass::kPotentiallyDynamic;
  std::int64_t track_id = -1;

  bool contains(const Pixel& px) const {
    return px.x() >= u_min && px.x() <= u_max && px.y() >= v_min && px.y() <= v_max;
  }
};

/// Index partition of the in-box points. `filtered` records whether the band
/// test actually ran (it is skipped below min_points).
struct DepthFilterResult {
  std::vector<std::size_t> retained;    // still dynamic candidates
  std::vector<std::size_t> background;  // out-of-band, reclassified static
  bool filtered = false;
  double mean_depth = 0.0;
  double depth_stddev = 0.0;
};

/// Splits the feature points of one detection box by the depth band
/// [mean - eta*stddev, mean + eta*stddev]. Points strictly outside the band
/// become background (static); boundary points are retained. Population
/// standard deviation.
inline DepthFilterResult depth_filter(std::span<const double> depths,
                                      const DepthFilterParams& params) {
  if (!params.valid()) {
    throw std::invalid_argument("depth_filter: invalid params");
  }
  DepthFilterResult result;
  const std::size_t n = depths.size();
  if (n < params.min_points) {
    result.retained.resize(n);
    for (std::size_t i = 0; i < n; ++i) result.retained[i] = i;
    return result;
  }

  double mean = 0.0;
  for (double d : depths) mean += d;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double d : depths) var += (d - mean) * (d - mean);
  var /= static_cast<double>(n);
  const double stddev = std::sqrt(var);

  result.filtered = true;
  result.mean_depth = mean;
  result.depth_stddev = stddev;
  const double lo = mean - params.eta * stddev;
  const double hi = mean + params.eta * stddev;
  for (std::size_t i = 0; i < n; ++i) {
    if (depths[i] < lo || depths[i] > hi) {
      result.background.push_back(i);
    } else {
      result.retained.push_back(i);
    }
  }
  return result;
}

inline DepthFilterResult depth_filter(const std::vector<FeatureObservation>& points,
                                      const DepthFilterParams& params) {
  std::vector<double> depths;
  depths.reserve(points.size());
  for (const auto& p : points) depths.push_back(p.depth);
  return depth_filter(std::span<const double>(depths), params);
}

}  // namespace mlpvo
