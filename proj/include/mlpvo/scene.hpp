#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "mlpvo/dataset.hpp"
#include "mlpvo/depth_filter.hpp"
#include "mlpvo/features.hpp"
#include "mlpvo/geometry.hpp"

namespace mlpvo {

struct SceneNoise {
  double pixel_sigma = 0.4;             // px, both frames
  double intensity_sigma_static = 2.0;  // grayscale units
  double intensity_sigma_dynamic = 14.0;
  double depth_rel_sigma = 0.03;  // relative error on the stored depth

  bool valid() const {
    return pixel_sigma >= 0.0 && intensity_sigma_static >= 0.0 &&
           intensity_sigma_dynamic >= 0.0 && depth_rel_sigma >= 0.0;
  }
};

/// Everything the generator needs to build a stereo scene: a static point
/// cloud, constant-velocity box objects, and a smooth forward+yaw camera
/// path. Units are meters and meters/frame.
struct SceneConfig {
  int frames = 30;
  int static_points = 800;
  int dynamic_objects = 6;
  int points_per_object = 50;

  // static world volume (camera starts at the origin looking along +z)
  double world_x_min = -15.0, world_x_max = 15.0;
  double world_y_min = -4.0, world_y_max = 4.0;
  double world_z_min = 4.0, world_z_max = 45.0;

  // dynamic object placement and motion
  double object_x_min = -10.0, object_x_max = 10.0;
  double object_y_min = -1.5, object_y_max = 1.5;
  double object_z_min = 8.0, object_z_max = 30.0;
  double object_half_x = 1.0, object_half_y = 0.7, object_half_z = 1.6;
  double object_speed_min = 0.10, object_speed_max = 0.40;
  // share of objects whose velocity is dominantly lateral rather than
  // along the optical axis (the latter barely disturb the epipolar error)
  double object_lateral_fraction = 0.5;
  // vertical jitter of the motion direction; off-axis motion is what the
  // epipolar error responds to under forward camera translation
  double object_vertical_motion = 0.05;

  double camera_forward_speed = 0.30;  // m/frame
  double camera_yaw_rate = 0.004;      // rad/frame

  double fx = 520.0, fy = 520.0, cx = 320.0, cy = 240.0;
  double baseline = 0.12;
  int image_width = 640, image_height = 480;

  double albedo_min = 20.0, albedo_max = 235.0;
  SceneNoise noise;

  double box_margin_px = 6.0;
  double spurious_box_fraction = 0.2;  // share of emitted boxes with static content
  int spurious_box_count = -1;         // >= 0 overrides the fraction
  double spurious_box_min_px = 50.0, spurious_box_max_px = 130.0;

  CameraIntrinsics intrinsics() const { return CameraIntrinsics{fx, fy, cx, cy, baseline}; }
};

struct DynamicObject {
  Point3 start_center = Point3::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // m/frame
  std::vector<Point3> offsets;                         // members, object frame
  std::vector<double> albedos;
  std::int64_t track_id = 0;

  Point3 member_position(std::size_t member, int frame) const {
    return start_center + velocity * static_cast<double>(frame) + offsets[member];
  }
};

struct SyntheticScene {
  SceneConfig config;
  std::vector<Point3> static_points;
  std::vector<double> static_albedos;
  std::vector<DynamicObject> objects;
  std::vector<Pose> trajectory;  // world -> camera, one per frame
  std::uint64_t seed = 0;
};

/// Observations of one consecutive frame pair (t-1, t): one record per point
/// visible in both frames, the raw observation pair behind each record, the
/// detection boxes of frame t, and the ground-truth relative pose.
struct FramePair {
  int current_frame = 0;
  std::vector<FeatureRecord> records;
  std::vector<std::pair<FeatureObservation, FeatureObservation>>
      observations;  // (previous, current), aligned with records
  std::vector<std::uint8_t> epipolar_degenerate;  // aligned with records
  std::vector<BoundingBox> boxes;
  Pose relative_gt;  // cam(t-1) -> cam(t)
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline bool in_image(const Pixel& px, const SceneConfig& cfg) {
  return px.x() >= 0.0 && px.x() <= static_cast<double>(cfg.image_width) &&
         px.y() >= 0.0 && px.y() <= static_cast<double>(cfg.image_height);
}

}  // namespace detail

inline SyntheticScene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  if (cfg.frames < 2) {
    throw std::invalid_argument("generate_scene: need at least 2 frames");
  }
  if (!cfg.noise.valid()) {
    throw std::invalid_argument("generate_scene: negative noise sigma");
  }
  SyntheticScene scene;
  scene.config = cfg;
  scene.seed = seed;
  std::mt19937_64 rng(detail::mix_seed(seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  scene.static_points.reserve(cfg.static_points);
  scene.static_albedos.reserve(cfg.static_points);
  for (int i = 0; i < cfg.static_points; ++i) {
    scene.static_points.emplace_back(uniform(cfg.world_x_min, cfg.world_x_max),
                                     uniform(cfg.world_y_min, cfg.world_y_max),
                                     uniform(cfg.world_z_min, cfg.world_z_max));
    scene.static_albedos.push_back(uniform(cfg.albedo_min, cfg.albedo_max));
  }

  for (int o = 0; o < cfg.dynamic_objects; ++o) {
    DynamicObject obj;
    obj.track_id = o;
    obj.start_center = Point3(uniform(cfg.object_x_min, cfg.object_x_max),
                              uniform(cfg.object_y_min, cfg.object_y_max),
                              uniform(cfg.object_z_min, cfg.object_z_max));
    const bool lateral = unit(rng) < cfg.object_lateral_fraction;
    const double speed = uniform(cfg.object_speed_min, cfg.object_speed_max);
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    const double cross = uniform(-0.25, 0.25);
    Eigen::Vector3d direction = lateral ? Eigen::Vector3d(sign, 0.0, cross)
                                        : Eigen::Vector3d(cross, 0.0, sign);
    direction.y() = uniform(-cfg.object_vertical_motion, cfg.object_vertical_motion);
    if (direction.norm() < 1e-12) direction = Eigen::Vector3d(1.0, 0.0, 0.0);
    obj.velocity = speed * direction.normalized();
    obj.offsets.reserve(cfg.points_per_object);
    obj.albedos.reserve(cfg.points_per_object);
    for (int j = 0; j < cfg.points_per_object; ++j) {
      obj.offsets.emplace_back(uniform(-cfg.object_half_x, cfg.object_half_x),
                               uniform(-cfg.object_half_y, cfg.object_half_y),
                               uniform(-cfg.object_half_z, cfg.object_half_z));
      obj.albedos.push_back(uniform(cfg.albedo_min, cfg.albedo_max));
    }
    scene.objects.push_back(std::move(obj));
  }

  // forward motion with a slow yaw about the vertical axis
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  scene.trajectory.reserve(cfg.frames);
  for (int t = 0; t < cfg.frames; ++t) {
    const double yaw = cfg.camera_yaw_rate * static_cast<double>(t);
    const Eigen::Matrix3d camera_to_world =
        Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
    Pose world_to_camera;
    world_to_camera.rotation = camera_to_world.transpose();
    world_to_camera.translation = -(camera_to_world.transpose() * position);
    scene.trajectory.push_back(world_to_camera);
    position += camera_to_world * Eigen::Vector3d(0.0, 0.0, cfg.camera_forward_speed);
  }
  return scene;
}

/// Observes the frame pair (current_frame - 1, current_frame). Deterministic
/// for a given scene and frame index.
inline FramePair observe(const SyntheticScene& scene, int current_frame) {
  const SceneConfig& cfg = scene.config;
  if (current_frame < 1 || current_frame >= cfg.frames) {
    throw std::invalid_argument("observe: frame index out of range");
  }
  const CameraIntrinsics k = cfg.intrinsics();
  const int prev_frame = current_frame - 1;
  const Pose& pose_prev = scene.trajectory[prev_frame];
  const Pose& pose_cur = scene.trajectory[current_frame];

  FramePair out;
  out.current_frame = current_frame;
  out.relative_gt = compose(pose_cur, invert(pose_prev));
  const EssentialMatrix essential = essential_from_relative(out.relative_gt);

  std::mt19937_64 rng(detail::mix_seed(scene.seed, 0x0B5EuLL + current_frame));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const SceneNoise& noise = cfg.noise;

  const auto emit = [&](const Point3& world_prev, const Point3& world_cur,
                        double albedo, bool dynamic) {
    const Point3 cam_prev = transform(pose_prev, world_prev);
    const Point3 cam_cur = transform(pose_cur, world_cur);
    if (cam_prev.z() <= 0.1 || cam_cur.z() <= 0.1) return;
    const Pixel px_prev_true = project(cam_prev, k);
    const Pixel px_cur_true = project(cam_cur, k);
    if (!detail::in_image(px_prev_true, cfg) || !detail::in_image(px_cur_true, cfg)) {
      return;
    }

    const double sigma_i =
        dynamic ? noise.intensity_sigma_dynamic : noise.intensity_sigma_static;
    FeatureObservation prev_obs;
    prev_obs.pixel = px_prev_true +
                     Pixel(gauss(rng) * noise.pixel_sigma, gauss(rng) * noise.pixel_sigma);
    prev_obs.depth =
        std::max(0.05, cam_prev.z() * (1.0 + gauss(rng) * noise.depth_rel_sigma));
    prev_obs.frame_id = prev_frame;
    prev_obs.intensity = std::clamp(albedo + gauss(rng) * sigma_i, 0.0, 255.0);

    FeatureObservation cur_obs;
    cur_obs.pixel = px_cur_true +
                    Pixel(gauss(rng) * noise.pixel_sigma, gauss(rng) * noise.pixel_sigma);
    cur_obs.depth = -1.0;
    cur_obs.frame_id = current_frame;
    cur_obs.intensity = std::clamp(albedo + gauss(rng) * sigma_i, 0.0, 255.0);

    // the noisy backprojection can land behind the current camera; such a
    // correspondence has no defined reprojection error, drop it
    if (transform(out.relative_gt, backproject(prev_obs.pixel, prev_obs.depth, k)).z() <=
        1e-3) {
      return;
    }

    bool degenerate = false;
    const FeatureVector v =
        build_feature(cur_obs, prev_obs, out.relative_gt, essential, k, &degenerate);

    FeatureRecord r;
    r.u1 = prev_obs.pixel.x();
    r.v1 = prev_obs.pixel.y();
    r.z1 = prev_obs.depth;
    r.id1 = prev_frame;
    r.u2 = cur_obs.pixel.x();
    r.v2 = cur_obs.pixel.y();
    r.id2 = current_frame;
    r.label = dynamic ? 1 : 0;
    r.err_intensity = v.intensity;
    r.err_reprojection = v.reprojection;
    r.err_epipolar = v.epipolar;
    out.records.push_back(r);
    out.observations.emplace_back(prev_obs, cur_obs);
    out.epipolar_degenerate.push_back(degenerate ? 1 : 0);
  };

  for (std::size_t i = 0; i < scene.static_points.size(); ++i) {
    emit(scene.static_points[i], scene.static_points[i], scene.static_albedos[i], false);
  }
  for (const DynamicObject& obj : scene.objects) {
    // a parked object (zero velocity) is part of the rigid world; its points
    // are static even though a detection box will still cover them
    const bool moving = obj.velocity.squaredNorm() > 0.0;
    for (std::size_t j = 0; j < obj.offsets.size(); ++j) {
      emit(obj.member_position(j, prev_frame), obj.member_position(j, current_frame),
           obj.albedos[j], moving);
    }
  }

  // detection boxes of the current frame, one per visible dynamic object
  for (const DynamicObject& obj : scene.objects) {
    double u_min = 1e300, v_min = 1e300, u_max = -1e300, v_max = -1e300;
    bool any = false;
    for (std::size_t j = 0; j < obj.offsets.size(); ++j) {
      const Point3 cam = transform(pose_cur, obj.member_position(j, current_frame));
      if (cam.z() <= 0.1) continue;
      const Pixel px = project(cam, k);
      if (!detail::in_image(px, cfg)) continue;
      any = true;
      u_min = std::min(u_min, px.x());
      v_min = std::min(v_min, px.y());
      u_max = std::max(u_max, px.x());
      v_max = std::max(v_max, px.y());
    }
    if (!any) continue;
    BoundingBox box;
    box.u_min = std::max(0.0, u_min - cfg.box_margin_px);
    box.v_min = std::max(0.0, v_min - cfg.box_margin_px);
    box.u_max = std::min(static_cast<double>(cfg.image_width), u_max + cfg.box_margin_px);
    box.v_max =
        std::min(static_cast<double>(cfg.image_height), v_max + cfg.box_margin_px);
    box.object_class = ObjectClass::kPotentiallyDynamic;
    box.track_id = obj.track_id;
    if (box.u_min < box.u_max && box.v_min < box.v_max) out.boxes.push_back(box);
  }

  // spurious potentially-dynamic boxes over purely static content, the
  // misdetected-parked-car scenario
  int spurious = cfg.spurious_box_count;
  if (spurious < 0) {
    const double f = std::clamp(cfg.spurious_box_fraction, 0.0, 0.9);
    spurious = static_cast<int>(
        std::llround(f / (1.0 - f) * static_cast<double>(out.boxes.size())));
  }
  std::vector<std::size_t> visible_static;
  for (std::size_t i = 0; i < scene.static_points.size(); ++i) {
    const Point3 cam = transform(pose_cur, scene.static_points[i]);
    if (cam.z() <= 0.1) continue;
    if (detail::in_image(project(cam, k), cfg)) visible_static.push_back(i);
  }
  for (int s = 0; s < spurious && !visible_static.empty(); ++s) {
    const auto pick = static_cast<std::size_t>(unit(rng) *
                                               static_cast<double>(visible_static.size()));
    const std::size_t idx = visible_static[std::min(pick, visible_static.size() - 1)];
    const Pixel center = project(transform(pose_cur, scene.static_points[idx]), k);
    const double half_w =
        0.5 * (cfg.spurious_box_min_px +
               (cfg.spurious_box_max_px - cfg.spurious_box_min_px) * unit(rng));
    const double half_h =
        0.5 * (cfg.spurious_box_min_px +
               (cfg.spurious_box_max_px - cfg.spurious_box_min_px) * unit(rng));
    BoundingBox box;
    box.u_min = std::max(0.0, center.x() - half_w);
    box.v_min = std::max(0.0, center.y() - half_h);
    box.u_max = std::min(static_cast<double>(cfg.image_width), center.x() + half_w);
    box.v_max = std::min(static_cast<double>(cfg.image_height), center.y() + half_h);
    box.object_class = ObjectClass::kPotentiallyDynamic;
    box.track_id = 1000 + s;
    if (box.u_min < box.u_max && box.v_min < box.v_max) out.boxes.push_back(box);
  }
  return out;
}

inline std::vector<FramePair> observe_all(const SyntheticScene& scene) {
  std::vector<FramePair> pairs;
  pairs.reserve(static_cast<std::size_t>(scene.config.frames - 1));
  for (int t = 1; t < scene.config.frames; ++t) pairs.push_back(observe(scene, t));
  return pairs;
}

inline std::vector<FeatureRecord> collect_records(std::span<const FramePair> pairs) {
  std::vector<FeatureRecord> records;
  for (const auto& p : pairs) {
    records.insert(records.end(), p.records.begin(), p.records.end());
  }
  return records;
}

/// Seeded subsample hitting the requested dynamic-label share as closely as
/// the class populations allow. fraction < 0 keeps everything.
inline std::vector<FeatureRecord> balance_records(std::span<const FeatureRecord> records,
                                                  double fraction, std::uint64_t seed) {
  if (fraction < 0.0) {
    return std::vector<FeatureRecord>(records.begin(), records.end());
  }
  if (fraction > 1.0) {
    throw std::invalid_argument("balance_records: fraction above 1");
  }
  std::vector<std::size_t> dynamic_idx, static_idx;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (records[i].label == 1 ? dynamic_idx : static_idx).push_back(i);
  }
  std::size_t total = 0;
  if (fraction == 0.0) {
    total = static_idx.size();
  } else if (fraction == 1.0) {
    total = dynamic_idx.size();
  } else {
    total = std::min(
        static_cast<std::size_t>(static_cast<double>(dynamic_idx.size()) / fraction),
        static_cast<std::size_t>(static_cast<double>(static_idx.size()) /
                                 (1.0 - fraction)));
  }
  const auto n_dynamic = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(total)));
  const std::size_t n_static = total - n_dynamic;

  std::mt19937_64 rng(detail::mix_seed(seed, 0xBA1AuLL));
  std::shuffle(dynamic_idx.begin(), dynamic_idx.end(), rng);
  std::shuffle(static_idx.begin(), static_idx.end(), rng);
  std::vector<std::size_t> keep(dynamic_idx.begin(), dynamic_idx.begin() + n_dynamic);
  keep.insert(keep.end(), static_idx.begin(), static_idx.begin() + n_static);
  std::shuffle(keep.begin(), keep.end(), rng);

  std::vector<FeatureRecord> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(records[i]);
  return out;
}

}  // namespace mlpvo
