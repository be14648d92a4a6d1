#pragma once

#include <Eigen/Geometry>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlpvo/dataset.hpp"
#include "mlpvo/depth_filter.hpp"
#include "mlpvo/features.hpp"
#include "mlpvo/mlp.hpp"
#include "mlpvo/scene.hpp"
#include "mlpvo/solver.hpp"

namespace mlpvo {

/// How in-box points are labeled during the fine stage.
///   kMlp       - trained discriminator (the full pipeline)
///   kOracle    - ground-truth record labels (lower-bound reference)
///   kAllPoints - no boxes, no classification; every point is used (naive)
enum class ClassifierMode { kMlp, kOracle, kAllPoints };

enum class PointCategory : std::uint8_t {
  kOutsideBox = 0,        // static by detection: not inside any dynamic-class box
  kDepthBackground = 1,   // in-box, reclassified static by the depth filter
  kClassifiedStatic = 2,  // in-box candidate the classifier kept
  kClassifiedDynamic = 3  // in-box candidate the classifier rejected
};

struct FrameDiagnostics {
  std::size_t total_points = 0;
  std::size_t outside_box = 0;
  std::size_t depth_background = 0;
  std::size_t classified_static = 0;
  std::size_t classified_dynamic = 0;
  int coarse_iterations = 0;
  int fine_iterations = 0;
  bool coarse_insufficient = false;  // coarse stage fell back to the init pose
  bool fine_insufficient = false;    // fine stage fell back to the coarse pose
};

struct FrameResult {
  Pose coarse;  // cam(t-1) -> cam(t)
  Pose fine;
  std::vector<PointCategory> categories;  // one per record
  FrameDiagnostics diagnostics;
};

inline Correspondence to_correspondence(const FeatureRecord& r,
                                        const CameraIntrinsics& k) {
  if (!(r.z1 > 0.0)) {
    throw std::invalid_argument("to_correspondence: record depth must be positive");
  }
  return Correspondence{backproject(Pixel(r.u1, r.v1), r.z1, k), Pixel(r.u2, r.v2)};
}

/// One coarse->classify->fine pass over a frame pair. The relative pose of
/// the records' two frames is estimated; init is typically the previous
/// frame's estimate.
inline FrameResult run_frame(std::span<const FeatureRecord> records,
                             std::span<const BoundingBox> boxes,
                             const CameraIntrinsics& k, const Pose& init,
                             ClassifierMode mode, const MlpModel* model,
                             const DepthFilterParams& filter_params,
                             const RobustSolverConfig& solver_cfg) {
  if (mode == ClassifierMode::kMlp && model == nullptr) {
    throw std::invalid_argument("run_frame: MLP mode needs a model");
  }
  FrameResult result;
  result.diagnostics.total_points = records.size();
  result.categories.assign(records.size(), PointCategory::kOutsideBox);

  std::vector<Correspondence> all;
  all.reserve(records.size());
  for (const auto& r : records) all.push_back(to_correspondence(r, k));

  if (mode == ClassifierMode::kAllPoints) {
    const PoseEstimate estimate = estimate_pose(all, k, init, solver_cfg);
    result.coarse = estimate.pose;
    result.fine = estimate.pose;
    result.diagnostics.outside_box = records.size();
    result.diagnostics.coarse_iterations = estimate.iterations;
    result.diagnostics.fine_iterations = estimate.iterations;
    return result;
  }

  // group the in-box points by the first dynamic-class box containing them
  std::vector<std::vector<std::size_t>> box_members(boxes.size());
  std::vector<std::size_t> coarse_set;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Pixel px(records[i].u2, records[i].v2);
    bool inside = false;
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      if (boxes[b].object_class != ObjectClass::kPotentiallyDynamic) continue;
      if (boxes[b].contains(px)) {
        box_members[b].push_back(i);
        inside = true;
        break;
      }
    }
    if (!inside) coarse_set.push_back(i);
  }
  result.diagnostics.outside_box = coarse_set.size();

  // depth-band rejection inside each box; out-of-band points are background
  std::vector<std::size_t> candidates;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    if (box_members[b].empty()) continue;
    std::vector<double> depths;
    depths.reserve(box_members[b].size());
    for (std::size_t i : box_members[b]) depths.push_back(records[i].z1);
    const DepthFilterResult part = depth_filter(depths, filter_params);
    for (std::size_t local : part.background) {
      const std::size_t i = box_members[b][local];
      result.categories[i] = PointCategory::kDepthBackground;
      coarse_set.push_back(i);
    }
    for (std::size_t local : part.retained) {
      const std::size_t i = box_members[b][local];
      result.categories[i] = PointCategory::kClassifiedDynamic;  // until classified
      candidates.push_back(i);
    }
  }
  result.diagnostics.depth_background =
      coarse_set.size() - result.diagnostics.outside_box;

  const auto solve_subset = [&](const std::vector<std::size_t>& subset,
                                const Pose& start) {
    std::vector<Correspondence> corr;
    corr.reserve(subset.size());
    for (std::size_t i : subset) corr.push_back(all[i]);
    return estimate_pose(corr, k, start, solver_cfg);
  };

  Pose coarse = init;
  if (coarse_set.size() >= kMinCorrespondences) {
    const PoseEstimate estimate = solve_subset(coarse_set, init);
    coarse = estimate.pose;
    result.diagnostics.coarse_iterations = estimate.iterations;
  } else {
    result.diagnostics.coarse_insufficient = true;
  }
  result.coarse = coarse;

  // classify the remaining candidates with features built from the coarse pose
  const EssentialMatrix essential = essential_from_relative(coarse);
  std::vector<std::size_t> fine_set = coarse_set;
  std::vector<FeatureVector> features;
  std::vector<std::size_t> feature_owner;
  for (std::size_t i : candidates) {
    const FeatureRecord& r = records[i];
    FeatureVector v;
    v.intensity = r.err_intensity;  // photometric, independent of the pose
    bool degenerate = false;
    v.epipolar = epipolar_error(essential, normalized_point(Pixel(r.u1, r.v1), k),
                                normalized_point(Pixel(r.u2, r.v2), k), &degenerate);
    try {
      v.reprojection =
          reprojection_error(coarse, Pixel(r.u2, r.v2), Pixel(r.u1, r.v1), r.z1, k);
    } catch (const std::domain_error&) {
      // behind the camera under the coarse pose: implausible as static
      result.categories[i] = PointCategory::kClassifiedDynamic;
      continue;
    }
    features.push_back(v);
    feature_owner.push_back(i);
  }

  std::vector<int> labels(features.size(), 0);
  if (mode == ClassifierMode::kMlp) {
    const std::vector<Prediction> predictions = predict_batch(*model, features);
    for (std::size_t j = 0; j < predictions.size(); ++j) labels[j] = predictions[j].label;
  } else {  // kOracle
    for (std::size_t j = 0; j < feature_owner.size(); ++j) {
      labels[j] = records[feature_owner[j]].label;
    }
  }
  for (std::size_t j = 0; j < feature_owner.size(); ++j) {
    const std::size_t i = feature_owner[j];
    if (labels[j] == 0) {
      result.categories[i] = PointCategory::kClassifiedStatic;
      fine_set.push_back(i);
    }
  }
  for (const PointCategory c : result.categories) {
    result.diagnostics.classified_static +=
        static_cast<std::size_t>(c == PointCategory::kClassifiedStatic);
    result.diagnostics.classified_dynamic +=
        static_cast<std::size_t>(c == PointCategory::kClassifiedDynamic);
  }

  Pose fine = coarse;
  if (fine_set.size() >= kMinCorrespondences) {
    const PoseEstimate estimate = solve_subset(fine_set, coarse);
    fine = estimate.pose;
    result.diagnostics.fine_iterations = estimate.iterations;
  } else {
    result.diagnostics.fine_insufficient = true;
  }
  result.fine = fine;
  return result;
}

struct SequenceResult {
  std::vector<Pose> trajectory;  // length frames; [0] is the identity
  std::vector<FrameResult> frames;
};

/// Runs the per-frame pipeline over consecutive pairs and chains the relative
/// estimates from the identity. The previous relative pose initializes each
/// solve (constant-velocity prior).
inline SequenceResult run_sequence(std::span<const FramePair> pairs,
                                   const CameraIntrinsics& k, ClassifierMode mode,
                                   const MlpModel* model,
                                   const DepthFilterParams& filter_params,
                                   const RobustSolverConfig& solver_cfg) {
  if (pairs.empty()) {
    throw std::invalid_argument("run_sequence: no frame pairs");
  }
  SequenceResult result;
  result.trajectory.push_back(Pose::identity());
  Pose prior = Pose::identity();
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    FrameResult frame;
    try {
      frame = run_frame(pairs[p].records, pairs[p].boxes, k, prior, mode, model,
                        filter_params, solver_cfg);
    } catch (const std::exception& e) {
      throw std::runtime_error("frame pair " + std::to_string(p) + ": " + e.what());
    }
    prior = frame.fine;
    result.trajectory.push_back(
        orthonormalized(compose(frame.fine, result.trajectory.back())));
    result.frames.push_back(std::move(frame));
  }
  return result;
}

/// Root-mean-square translational error after aligning the first poses. The
/// alignment frame itself (error zero by construction) is excluded from the
/// mean.
inline double ate_rmse(std::span<const Pose> estimated,
                       std::span<const Pose> ground_truth) {
  if (estimated.size() != ground_truth.size()) {
    throw std::invalid_argument("ate_rmse: trajectory lengths differ");
  }
  if (estimated.size() < 2) {
    throw std::invalid_argument("ate_rmse: need at least 2 poses");
  }
  const Pose align = compose(invert(estimated[0]), ground_truth[0]);
  double sum = 0.0;
  for (std::size_t t = 1; t < estimated.size(); ++t) {
    const Pose corrected = compose(estimated[t], align);
    sum += (camera_center(corrected) - camera_center(ground_truth[t])).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(estimated.size() - 1));
}

// --- trajectory file format: frame_id tx ty tz qx qy qz qw -----------------
// tx..qw describe the camera-in-world transform (position + orientation).

inline void write_trajectory(std::span<const Pose> world_to_camera, std::ostream& out) {
  for (std::size_t t = 0; t < world_to_camera.size(); ++t) {
    const Pose& p = world_to_camera[t];
    const Point3 center = camera_center(p);
    Eigen::Quaterniond q(p.rotation.transpose());
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    out << t << ' ' << format_double(center.x()) << ' ' << format_double(center.y())
        << ' ' << format_double(center.z()) << ' ' << format_double(q.x()) << ' '
        << format_double(q.y()) << ' ' << format_double(q.z()) << ' '
        << format_double(q.w()) << '\n';
  }
}

inline std::vector<Pose> read_trajectory(std::istream& in) {
  std::vector<Pose> poses;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view content = trim(line);
    if (content.empty() || content.front() == '#') continue;
    std::istringstream fields{std::string(content)};
    std::int64_t frame_id = 0;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(fields >> frame_id >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw std::runtime_error("trajectory line " + std::to_string(line_no) +
                               ": expected 'frame_id tx ty tz qx qy qz qw'");
    }
    const Eigen::Quaterniond q(qw, qx, qy, qz);
    const Eigen::Matrix3d camera_to_world = q.normalized().toRotationMatrix();
    Pose p;
    p.rotation = camera_to_world.transpose();
    p.translation = -(camera_to_world.transpose() * Eigen::Vector3d(tx, ty, tz));
    poses.push_back(p);
  }
  return poses;
}

}  // namespace mlpvo
