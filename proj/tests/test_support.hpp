#pragma once

#include <random>

#include "mlpvo/geometry.hpp"

// Helpers shared across test files. Pose generation goes through AngleAxis on
// purpose: it must stay independent of se3_exp, which the tests check.
namespace test_support {

inline mlpvo::Pose random_pose(std::mt19937_64& rng, double max_angle = 1.5,
                               double max_translation = 2.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Vector3d axis(u(rng), u(rng), u(rng));
  if (axis.norm() < 1e-9) axis = Eigen::Vector3d::UnitX();
  axis.normalize();
  std::uniform_real_distribution<double> angle(0.0, max_angle);
  mlpvo::Pose p;
  p.rotation = Eigen::AngleAxisd(angle(rng), axis).toRotationMatrix();
  p.translation =
      Eigen::Vector3d(u(rng), u(rng), u(rng)) * max_translation;
  return p;
}

inline double pose_difference(const mlpvo::Pose& a, const mlpvo::Pose& b) {
  return (a.rotation - b.rotation).norm() + (a.translation - b.translation).norm();
}

inline mlpvo::CameraIntrinsics test_intrinsics() {
  return mlpvo::CameraIntrinsics{520.0, 520.0, 320.0, 240.0, 0.12};
}

}  // namespace test_support
