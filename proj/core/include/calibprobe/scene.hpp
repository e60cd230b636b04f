#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "calibprobe/geometry.hpp"
#include "calibprobe/sensor.hpp"

namespace calibprobe {

/// Axis-aligned box resting in the world. Sizes are full extents (meters).
struct Box {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double albedo = 0.5;
};

/// Synthetic scene: a ground plane at z = 0 plus boxes. World axes are
/// x lateral, y forward, z up.
struct World {
  double ground_albedo = 0.4;
  std::vector<Box> boxes;
  uint64_t seed = 0;

  bool valid() const;
};

/// Spinning-scanner geometry: one ray per (beam elevation x azimuth step).
struct LidarSpec {
  int n_beams = 48;
  double vfov_min_deg = -25.0;
  double vfov_max_deg = 3.0;
  int azimuth_steps = 384;
  double max_range = 80.0;

  bool valid() const {
    return n_beams >= 1 && azimuth_steps >= 8 && max_range > 0.0 &&
           vfov_min_deg <= vfov_max_deg;
  }
};

struct CameraDef {
  std::string id;
  RigidTransform t_lidar_to_cam;  // extrinsic: LiDAR frame -> camera frame
  Intrinsics intrinsics;
};

struct CameraRig {
  std::vector<CameraDef> cameras;

  bool has(const std::string& id) const;
  const CameraDef& camera(const std::string& id) const;
  /// Relative transform mapping camera `from` coordinates into camera `to`:
  /// t_to * t_from^{-1}.
  RigidTransform relative(const std::string& from, const std::string& to) const;
};

/// Ground plane plus n_boxes boxes with centers in the forward corridor
/// (x in [-extent, extent], y in [0.1 extent, extent], resting on the ground,
/// heights 0.5-8 m). Deterministic per rng seed.
World generate_world(int n_boxes, double extent, Rng& rng);

/// Casts one ray per beam/azimuth cell from the sensor origin. Hits within
/// max_range become points in the LiDAR frame with the primitive's albedo as
/// intensity; misses yield nothing.
PointCloud lidar_scan(const World& w, const RigidTransform& pose,
                      const LidarSpec& spec);

/// One ray per pixel through the pixel center; value = albedo of the nearest
/// hit, 0 on miss. cam_pose maps camera frame -> world.
Raster render_intensity(const World& w, const RigidTransform& cam_pose,
                        const Intrinsics& k);

/// Rotation taking LiDAR axes (x lateral, y forward, z up) into optical axes
/// (x right, y down, z forward).
RigidTransform optical_mount();

/// Two same-type forward cameras: "left", and "right" offset by a pure
/// x-translation of `baseline` meters in the optical frame.
CameraRig default_rig(int width, int height, double baseline);

// ---------------------------------------------------------------------------
// Real-data ingestion (experimental; acceptance runs on synthetic data only).
// ---------------------------------------------------------------------------

/// Reads the de-facto binary scan format: consecutive little-endian f32
/// quadruples x, y, z, reflectance.
PointCloud read_lidar_bin(const std::filesystem::path& path);

/// Parses a plain-text calibration file, one "key: v0 .. v11" line per entry
/// (row-major 3x4). Lines with other value counts are ignored.
std::map<std::string, Eigen::Matrix<double, 3, 4>> read_calib_file(
    const std::filesystem::path& path);

/// Interprets a 3x4 calibration entry as a rigid transform; the rotation block
/// is polar-projected onto SO(3) to absorb file round-off.
RigidTransform rigid_from_3x4(const Eigen::Matrix<double, 3, 4>& m);

}  // namespace calibprobe
