#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "mlpvo/geometry.hpp"

namespace mlpvo {

struct RobustSolverConfig {
  double huber_delta = 2.0;  // px; residual norms beyond this get down-weighted
  int max_iterations = 100;
  double convergence_epsilon = 1e-10;  // update-norm termination threshold
  double initial_damping = 1e-4;
  double damping_up = 10.0;
  double damping_down = 0.1;
  bool use_robust_kernel = true;

  bool valid() const {
    return huber_delta > 0.0 && max_iterations >= 1 && convergence_epsilon > 0.0 &&
           initial_damping > 0.0;
  }
};

/// A 3D point expressed in a reference frame paired with its observed pixel
/// in the target frame; estimate_pose solves for the reference-to-target
/// transform.
struct Correspondence {
  Point3 reference_point = Point3::Zero();
  Pixel observed_pixel = Pixel::Zero();
};

using CorrespondenceSet = std::vector<Correspondence>;

constexpr std::size_t kMinCorrespondences = 6;

struct PoseEstimate {
  Pose pose;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::size_t used_points = 0;         // points in front of the camera at init
  std::vector<double> accepted_costs;  // robust total cost after each accepted step
};

namespace detail {

inline double huber_cost(double residual_norm, double delta, bool robust) {
  if (!robust || residual_norm <= delta) return 0.5 * residual_norm * residual_norm;
  return delta * (residual_norm - 0.5 * delta);
}

}  // namespace detail

/// Levenberg-damped Gauss-Newton over the 6-dof twist, left-multiplied
/// update exp(delta) * T. The robust total cost never increases across
/// accepted steps. Points behind the camera at init are excluded from the
/// solve; a candidate step that would push a used point behind the camera is
/// rejected.
inline PoseEstimate estimate_pose(std::span<const Correspondence> corr,
                                  const CameraIntrinsics& k, const Pose& init,
                                  const RobustSolverConfig& cfg) {
  if (!cfg.valid()) {
    throw std::invalid_argument("estimate_pose: invalid config");
  }
  if (corr.size() < kMinCorrespondences) {
    throw std::invalid_argument(
        "estimate_pose: under-constrained, need at least 6 correspondences");
  }

  std::vector<std::size_t> active;
  active.reserve(corr.size());
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (transform(init, corr[i].reference_point).z() > 1e-9) active.push_back(i);
  }
  if (active.empty()) {
    throw std::runtime_error("estimate_pose: all points behind camera at init");
  }
  if (active.size() < kMinCorrespondences) {
    throw std::runtime_error(
        "estimate_pose: fewer than 6 points in front of camera at init");
  }

  // robust total cost over the active set; false when a point goes behind
  const auto total_cost = [&](const Pose& pose, double& cost) {
    cost = 0.0;
    for (std::size_t i : active) {
      const Point3 p = transform(pose, corr[i].reference_point);
      if (p.z() <= 1e-9) return false;
      const double r = (corr[i].observed_pixel - project(p, k)).norm();
      cost += detail::huber_cost(r, cfg.huber_delta, cfg.use_robust_kernel);
    }
    return true;
  };

  Pose pose = init;
  double cost = 0.0;
  total_cost(pose, cost);

  PoseEstimate result;
  result.used_points = active.size();
  result.accepted_costs.push_back(cost);
  double damping = cfg.initial_damping;

  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Vec6 = Eigen::Matrix<double, 6, 1>;

  int iteration = 0;
  for (; iteration < cfg.max_iterations; ++iteration) {
    Mat6 hessian = Mat6::Zero();
    Vec6 gradient = Vec6::Zero();
    for (std::size_t i : active) {
      const Point3 p = transform(pose, corr[i].reference_point);
      const double inv_z = 1.0 / p.z();
      const double inv_z2 = inv_z * inv_z;
      // d(pixel)/d(camera point)
      Eigen::Matrix<double, 2, 3> j_proj;
      j_proj << k.fx * inv_z, 0.0, -k.fx * p.x() * inv_z2,
                0.0, k.fy * inv_z, -k.fy * p.y() * inv_z2;
      // d(camera point)/d(twist), translation block first
      Eigen::Matrix<double, 3, 6> j_point;
      j_point.leftCols<3>() = Eigen::Matrix3d::Identity();
      j_point.rightCols<3>() = -skew(p);
      const Eigen::Matrix<double, 2, 6> jac = j_proj * j_point;

      const Pixel residual = corr[i].observed_pixel - project(p, k);
      const double norm = residual.norm();
      double weight = 1.0;
      if (cfg.use_robust_kernel && norm > cfg.huber_delta) {
        weight = cfg.huber_delta / norm;
      }
      hessian.noalias() += weight * jac.transpose() * jac;
      gradient.noalias() += weight * jac.transpose() * residual;
    }

    bool accepted = false;
    double step_norm = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Mat6 damped = hessian;
      for (int d = 0; d < 6; ++d) {
        damped(d, d) += damping * std::max(hessian(d, d), 1e-12);
      }
      const Vec6 delta = damped.ldlt().solve(gradient);
      if (!delta.allFinite()) {
        damping *= cfg.damping_up;
        continue;
      }
      const Pose candidate = compose(se3_exp(delta), pose);
      double candidate_cost = 0.0;
      if (!total_cost(candidate, candidate_cost) || candidate_cost > cost) {
        damping *= cfg.damping_up;
        continue;
      }
      pose = candidate;
      cost = candidate_cost;
      result.accepted_costs.push_back(cost);
      damping = std::max(damping * cfg.damping_down, 1e-12);
      step_norm = delta.norm();
      accepted = true;
      break;
    }

    if (!accepted) {
      result.converged = true;  // no descent direction left at this damping range
      break;
    }
    if (step_norm < cfg.convergence_epsilon) {
      result.converged = true;
      ++iteration;
      break;
    }
  }

  result.pose = pose;
  result.final_cost = cost;
  result.iterations = iteration;
  return result;
}

}  // namespace mlpvo
