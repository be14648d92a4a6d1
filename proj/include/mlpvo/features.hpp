#pragma once

#include <cmath>
#include <stdexcept>

#include "mlpvo/geometry.hpp"

namespace mlpvo {

/// One feature point seen in one frame. depth is -1 when unknown; intensity
/// is the observed grayscale value at the pixel, in [0, 255].
struct FeatureObservation {
  Pixel pixel = Pixel::Zero();
  double depth = -1.0;
  std::int64_t frame_id = 0;
  double intensity = 0.0;

  bool has_depth() const { return depth > 0.0; }
};

/// The three-component error feature fed to the discriminator.
/// intensity: grayscale units; epipolar: signed, normalized-coordinate units;
/// reprojection: squared pixels.
struct FeatureVector {
  double intensity = 0.0;
  double epipolar = 0.0;
  double reprojection = 0.0;
};

inline double intensity_error(const FeatureObservation& a, const FeatureObservation& b) {
  return std::abs(a.intensity - b.intensity);
}

/// Signed distance of pa to the epipolar line induced by pb, for E built from
/// the a_to_b relative pose (both points normalized homogeneous). When the
/// line normal vanishes (pure rotation, E = 0) the result is 0 and
/// *degenerate is set.
inline double epipolar_error(const EssentialMatrix& e, const Eigen::Vector3d& pa,
                             const Eigen::Vector3d& pb, bool* degenerate = nullptr) {
  if (degenerate != nullptr) *degenerate = false;
  const Eigen::Vector3d line = e.transpose() * pb;  // row vector pb' * E
  const double normal = std::hypot(line.x(), line.y());
  if (normal < 1e-12) {
    if (degenerate != nullptr) *degenerate = true;
    return 0.0;
  }
  return line.dot(pa) / normal;
}

/// Squared pixel distance between the observed target pixel and the
/// projection of the source observation carried over by source_to_target.
inline double reprojection_error(const Pose& source_to_target, const Pixel& target_px,
                                 const Pixel& source_px, double source_depth,
                                 const CameraIntrinsics& k) {
  const Point3 in_source = backproject(source_px, source_depth, k);
  const Point3 in_target = transform(source_to_target, in_source);
  if (!(in_target.z() > 0.0)) {
    throw std::domain_error("reprojection_error: reprojected point behind camera");
  }
  return (project(in_target, k) - target_px).squaredNorm();
}

/// Assembles the feature vector for a correspondence between a current-frame
/// observation and a previous-frame observation whose depth is known.
/// prev_to_cur maps previous-frame camera coordinates into the current frame;
/// e must be essential_from_relative(prev_to_cur).
inline FeatureVector build_feature(const FeatureObservation& current,
                                   const FeatureObservation& previous,
                                   const Pose& prev_to_cur, const EssentialMatrix& e,
                                   const CameraIntrinsics& k,
                                   bool* epipolar_degenerate = nullptr) {
  if (!previous.has_depth()) {
    throw std::invalid_argument("build_feature: previous observation lacks depth");
  }
  FeatureVector v;
  v.intensity = intensity_error(current, previous);
  v.epipolar = epipolar_error(e, normalized_point(previous.pixel, k),
                              normalized_point(current.pixel, k), epipolar_degenerate);
  v.reprojection =
      reprojection_error(prev_to_cur, current.pixel, previous.pixel, previous.depth, k);
  return v;
}

}  // namespace mlpvo
