#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>

#include "mlpvo/scene.hpp"
#include "mlpvo/text_io.hpp"

namespace mlpvo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ConfigMap = std::map<std::string, std::string>;

/// `key = value` lines; '#' starts a comment, blank lines are skipped.
inline ConfigMap parse_config(std::istream& in) {
  ConfigMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view content = trim(line);
    if (content.empty() || content.front() == '#') continue;
    const std::size_t eq = content.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key{trim(content.substr(0, eq))};
    const std::string value{trim(content.substr(eq + 1))};
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    }
    if (!map.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" +
                        key + "'");
    }
  }
  return map;
}

inline void write_config(const ConfigMap& map, std::ostream& out) {
  for (const auto& [key, value] : map) {
    out << key << " = " << value << '\n';
  }
}

/// Typed access that tracks which keys were consumed, so typos in config
/// files fail loudly instead of silently using a default.
class ConfigReader {
 public:
  explicit ConfigReader(ConfigMap map) : map_(std::move(map)) {}

  double get_double(const std::string& key, double fallback) {
    const auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    consumed_.insert(key);
    double v = 0.0;
    if (!parse_double(it->second, v)) {
      throw ConfigError("config key '" + key + "': not a number: '" + it->second + "'");
    }
    return v;
  }

  int get_int(const std::string& key, int fallback) {
    const auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    consumed_.insert(key);
    std::int64_t v = 0;
    if (!parse_int64(it->second, v)) {
      throw ConfigError("config key '" + key + "': not an integer: '" + it->second + "'");
    }
    return static_cast<int>(v);
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const auto it = map_.find(key);
    if (it == map_.end()) return fallback;
    consumed_.insert(key);
    return it->second;
  }

  bool has(const std::string& key) const { return map_.count(key) > 0; }

  /// Throws when keys remain that nothing consumed.
  void finish() const {
    std::string unknown;
    for (const auto& [key, value] : map_) {
      if (consumed_.count(key) == 0) {
        unknown += unknown.empty() ? key : (", " + key);
      }
    }
    if (!unknown.empty()) {
      throw ConfigError("unknown config keys: " + unknown);
    }
  }

 private:
  ConfigMap map_;
  std::set<std::string> consumed_;
};

inline SceneConfig scene_config_from_reader(ConfigReader& reader) {
  SceneConfig c;
  c.frames = reader.get_int("frames", c.frames);
  c.static_points = reader.get_int("static_points", c.static_points);
  c.dynamic_objects = reader.get_int("dynamic_objects", c.dynamic_objects);
  c.points_per_object = reader.get_int("points_per_object", c.points_per_object);
  c.world_x_min = reader.get_double("world_x_min", c.world_x_min);
  c.world_x_max = reader.get_double("world_x_max", c.world_x_max);
  c.world_y_min = reader.get_double("world_y_min", c.world_y_min);
  c.world_y_max = reader.get_double("world_y_max", c.world_y_max);
  c.world_z_min = reader.get_double("world_z_min", c.world_z_min);
  c.world_z_max = reader.get_double("world_z_max", c.world_z_max);
  c.object_x_min = reader.get_double("object_x_min", c.object_x_min);
  c.object_x_max = reader.get_double("object_x_max", c.object_x_max);
  c.object_y_min = reader.get_double("object_y_min", c.object_y_min);
  c.object_y_max = reader.get_double("object_y_max", c.object_y_max);
  c.object_z_min = reader.get_double("object_z_min", c.object_z_min);
  c.object_z_max = reader.get_double("object_z_max", c.object_z_max);
  c.object_half_x = reader.get_double("object_half_x", c.object_half_x);
  c.object_half_y = reader.get_double("object_half_y", c.object_half_y);
  c.object_half_z = reader.get_double("object_half_z", c.object_half_z);
  c.object_speed_min = reader.get_double("object_speed_min", c.object_speed_min);
  c.object_speed_max = reader.get_double("object_speed_max", c.object_speed_max);
  c.object_lateral_fraction =
      reader.get_double("object_lateral_fraction", c.object_lateral_fraction);
  c.object_vertical_motion =
      reader.get_double("object_vertical_motion", c.object_vertical_motion);
  c.camera_forward_speed =
      reader.get_double("camera_forward_speed", c.camera_forward_speed);
  c.camera_yaw_rate = reader.get_double("camera_yaw_rate", c.camera_yaw_rate);
  c.fx = reader.get_double("fx", c.fx);
  c.fy = reader.get_double("fy", c.fy);
  c.cx = reader.get_double("cx", c.cx);
  c.cy = reader.get_double("cy", c.cy);
  c.baseline = reader.get_double("baseline", c.baseline);
  c.image_width = reader.get_int("image_width", c.image_width);
  c.image_height = reader.get_int("image_height", c.image_height);
  c.albedo_min = reader.get_double("albedo_min", c.albedo_min);
  c.albedo_max = reader.get_double("albedo_max", c.albedo_max);
  c.noise.pixel_sigma = reader.get_double("pixel_sigma", c.noise.pixel_sigma);
  c.noise.intensity_sigma_static =
      reader.get_double("intensity_sigma_static", c.noise.intensity_sigma_static);
  c.noise.intensity_sigma_dynamic =
      reader.get_double("intensity_sigma_dynamic", c.noise.intensity_sigma_dynamic);
  c.noise.depth_rel_sigma = reader.get_double("depth_rel_sigma", c.noise.depth_rel_sigma);
  c.box_margin_px = reader.get_double("box_margin_px", c.box_margin_px);
  c.spurious_box_fraction =
      reader.get_double("spurious_box_fraction", c.spurious_box_fraction);
  c.spurious_box_count = reader.get_int("spurious_box_count", c.spurious_box_count);
  c.spurious_box_min_px = reader.get_double("spurious_box_min_px", c.spurious_box_min_px);
  c.spurious_box_max_px = reader.get_double("spurious_box_max_px", c.spurious_box_max_px);
  return c;
}

inline ConfigMap scene_config_to_map(const SceneConfig& c) {
  ConfigMap m;
  m["frames"] = std::to_string(c.frames);
  m["static_points"] = std::to_string(c.static_points);
  m["dynamic_objects"] = std::to_string(c.dynamic_objects);
  m["points_per_object"] = std::to_string(c.points_per_object);
  m["world_x_min"] = format_double(c.world_x_min);
  m["world_x_max"] = format_double(c.world_x_max);
  m["world_y_min"] = format_double(c.world_y_min);
  m["world_y_max"] = format_double(c.world_y_max);
  m["world_z_min"] = format_double(c.world_z_min);
  m["world_z_max"] = format_double(c.world_z_max);
  m["object_x_min"] = format_double(c.object_x_min);
  m["object_x_max"] = format_double(c.object_x_max);
  m["object_y_min"] = format_double(c.object_y_min);
  m["object_y_max"] = format_double(c.object_y_max);
  m["object_z_min"] = format_double(c.object_z_min);
  m["object_z_max"] = format_double(c.object_z_max);
  m["object_half_x"] = format_double(c.object_half_x);
  m["object_half_y"] = format_double(c.object_half_y);
  m["object_half_z"] = format_double(c.object_half_z);
  m["object_speed_min"] = format_double(c.object_speed_min);
  m["object_speed_max"] = format_double(c.object_speed_max);
  m["object_lateral_fraction"] = format_double(c.object_lateral_fraction);
  m["object_vertical_motion"] = format_double(c.object_vertical_motion);
  m["camera_forward_speed"] = format_double(c.camera_forward_speed);
  m["camera_yaw_rate"] = format_double(c.camera_yaw_rate);
  m["fx"] = format_double(c.fx);
  m["fy"] = format_double(c.fy);
  m["cx"] = format_double(c.cx);
  m["cy"] = format_double(c.cy);
  m["baseline"] = format_double(c.baseline);
  m["image_width"] = std::to_string(c.image_width);
  m["image_height"] = std::to_string(c.image_height);
  m["albedo_min"] = format_double(c.albedo_min);
  m["albedo_max"] = format_double(c.albedo_max);
  m["pixel_sigma"] = format_double(c.noise.pixel_sigma);
  m["intensity_sigma_static"] = format_double(c.noise.intensity_sigma_static);
  m["intensity_sigma_dynamic"] = format_double(c.noise.intensity_sigma_dynamic);
  m["depth_rel_sigma"] = format_double(c.noise.depth_rel_sigma);
  m["box_margin_px"] = format_double(c.box_margin_px);
  m["spurious_box_fraction"] = format_double(c.spurious_box_fraction);
  m["spurious_box_count"] = std::to_string(c.spurious_box_count);
  m["spurious_box_min_px"] = format_double(c.spurious_box_min_px);
  m["spurious_box_max_px"] = format_double(c.spurious_box_max_px);
  return m;
}

}  // namespace mlpvo
