#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace mlpvo {

using Point3 = Eigen::Vector3d;
using Pixel = Eigen::Vector2d;
using Twist = Eigen::Matrix<double, 6, 1>;  // (tx, ty, tz, wx, wy, wz)
using EssentialMatrix = Eigen::Matrix3d;

/// Pinhole camera parameters. The stereo baseline is only consumed by the
/// synthetic scene generator, which models depth as coming from disparity.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double baseline = 0.0;  // meters

  bool valid() const { return fx > 0.0 && fy > 0.0 && baseline > 0.0; }
};

/// Rigid transform mapping world coordinates into camera coordinates
/// (X_c = R * X_w + t). Relative poses between frames use the same layout:
/// a pose "a_to_b" maps frame-a camera coordinates into frame-b coordinates.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return Pose{}; }
};

inline Point3 transform(const Pose& a, const Point3& p) {
  return a.rotation * p + a.translation;
}

/// compose(a, b): apply b first, then a.
inline Pose compose(const Pose& a, const Pose& b) {
  return Pose{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline Pose invert(const Pose& a) {
  Eigen::Matrix3d rt = a.rotation.transpose();
  return Pose{rt, -(rt * a.translation)};
}

/// Camera center in the source frame of the transform (world frame for an
/// absolute pose).
inline Point3 camera_center(const Pose& world_to_camera) {
  return -(world_to_camera.rotation.transpose() * world_to_camera.translation);
}

/// Projects nearest rotation matrix; keeps long composition chains orthonormal.
inline Pose orthonormalized(const Pose& a) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(a.rotation,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return Pose{r, a.translation};
}

inline double rotation_angle(const Eigen::Matrix3d& r) {
  double c = (r.trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

inline Pixel project(const Point3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0.0)) {
    throw std::domain_error("project: point has non-positive depth");
  }
  const double inv_z = 1.0 / p.z();
  return Pixel(k.fx * p.x() * inv_z + k.cx, k.fy * p.y() * inv_z + k.cy);
}

inline Point3 backproject(const Pixel& px, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0.0)) {
    throw std::domain_error("backproject: non-positive depth");
  }
  return Point3((px.x() - k.cx) * depth / k.fx, (px.y() - k.cy) * depth / k.fy, depth);
}

/// Normalized homogeneous image point K^-1 * (u, v, 1).
inline Eigen::Vector3d normalized_point(const Pixel& px, const CameraIntrinsics& k) {
  return Eigen::Vector3d((px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy, 1.0);
}

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

/// E = [t]x * R for the relative pose a_to_b, so that for a static point seen
/// as normalized points pa (frame a) and pb (frame b): pb' * E * pa = 0.
/// A zero-translation pose yields the all-zero matrix; epipolar_error() then
/// reports its result as degenerate, so no separate flag is carried here.
inline EssentialMatrix essential_from_relative(const Pose& a_to_b) {
  return skew(a_to_b.translation) * a_to_b.rotation;
}

/// Exponential map. Twist layout is translation first, rotation last.
inline Pose se3_exp(const Twist& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d phi = xi.tail<3>();
  const double theta = phi.norm();
  const Eigen::Matrix3d k = skew(phi);
  const Eigen::Matrix3d k2 = k * k;

  Eigen::Matrix3d r;
  Eigen::Matrix3d v;
  if (theta < 1e-9) {
    // second-order series, exact to well below double precision here
    r = Eigen::Matrix3d::Identity() + k + 0.5 * k2;
    v = Eigen::Matrix3d::Identity() + 0.5 * k + k2 / 6.0;
  } else {
    const double t2 = theta * theta;
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    r = Eigen::Matrix3d::Identity() + (s / theta) * k + ((1.0 - c) / t2) * k2;
    v = Eigen::Matrix3d::Identity() + ((1.0 - c) / t2) * k +
        ((theta - s) / (t2 * theta)) * k2;
  }
  return Pose{r, v * rho};
}

inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  const double theta = rotation_angle(r);
  if (theta < 1e-9) {
    Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    return 0.5 * w * (1.0 + theta * theta / 6.0);
  }
  if (theta > M_PI - 1e-6) {
    // near pi the antisymmetric part vanishes; recover the axis from the
    // dominant column of R + I
    Eigen::Matrix3d b = r + Eigen::Matrix3d::Identity();
    int col = 0;
    b.colwise().norm().maxCoeff(&col);
    Eigen::Vector3d axis = b.col(col).normalized();
    // fix the sign using the antisymmetric part where it is still nonzero
    Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    if (w.dot(axis) < 0.0) axis = -axis;
    return theta * axis;
  }
  Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return (theta / (2.0 * std::sin(theta))) * w;
}

/// Logarithm map, inverse of se3_exp for rotation angles below pi.
inline Twist se3_log(const Pose& p) {
  const Eigen::Vector3d phi = so3_log(p.rotation);
  const double theta = phi.norm();
  const Eigen::Matrix3d k = skew(phi);
  const Eigen::Matrix3d k2 = k * k;

  Eigen::Matrix3d v_inv;
  if (theta < 1e-9) {
    v_inv = Eigen::Matrix3d::Identity() - 0.5 * k + k2 / 12.0;
  } else {
    const double half = 0.5 * theta;
    const double cot_half = std::cos(half) / std::sin(half);
    const double coeff = (1.0 - half * cot_half) / (theta * theta);
    v_inv = Eigen::Matrix3d::Identity() - 0.5 * k + coeff * k2;
  }
  Twist xi;
  xi.head<3>() = v_inv * p.translation;
  xi.tail<3>() = phi;
  return xi;
}

}  // namespace mlpvo
