#include "calibprobe/scene.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "calibprobe/errors.hpp"
#include "calibprobe/fsio.hpp"

namespace calibprobe {

bool World::valid() const {
  for (const Box& b : boxes) {
    if (!(b.size.minCoeff() > 0.0)) return false;
    if (b.center.z() - 0.5 * b.size.z() < -1e-9) return false;
  }
  return ground_albedo >= 0.0 && ground_albedo <= 1.0;
}

bool CameraRig::has(const std::string& id) const {
  for (const auto& c : cameras) {
    if (c.id == id) return true;
  }
  return false;
}

const CameraDef& CameraRig::camera(const std::string& id) const {
  for (const auto& c : cameras) {
    if (c.id == id) return c;
  }
  throw ConfigError("unknown camera id: " + id);
}

RigidTransform CameraRig::relative(const std::string& from,
                                   const std::string& to) const {
  return camera(to).t_lidar_to_cam * camera(from).t_lidar_to_cam.inverse();
}

World generate_world(int n_boxes, double extent, Rng& rng) {
  if (n_boxes < 0) throw std::invalid_argument("generate_world: n_boxes < 0");
  World w;
  w.seed = rng.seed();
  w.boxes.reserve(static_cast<size_t>(n_boxes));
  // keep a clear zone around the sensor origin
  const double y_min = std::max(4.0, 0.1 * extent);
  for (int i = 0; i < n_boxes; ++i) {
    Box b;
    const double x = rng.uniform(-extent, extent);
    const double y = rng.uniform(y_min, extent);
    const double wx = rng.uniform(0.5, 6.0);
    const double wy = rng.uniform(0.5, 6.0);
    const double h = rng.uniform(0.5, 8.0);
    b.albedo = rng.uniform(0.15, 0.95);
    b.size = Eigen::Vector3d(wx, wy, h);
    b.center = Eigen::Vector3d(x, y, 0.5 * h);  // resting on the ground
    w.boxes.push_back(b);
  }
  return w;
}

namespace {

struct Hit {
  double t = -1.0;
  double albedo = 0.0;
  bool valid() const { return t > 0.0; }
};

// Returns closer than this are discarded (sensor housing clearance).
constexpr double kMinHitRange = 0.05;

// Nearest intersection of origin + t*dir with the ground plane and all boxes.
Hit cast_ray(const World& w, const Eigen::Vector3d& origin,
             const Eigen::Vector3d& dir, double max_range) {
  Hit best;
  best.t = max_range;
  bool found = false;

  if (dir.z() < 0.0) {
    const double t = -origin.z() / dir.z();
    if (t > kMinHitRange && t <= best.t) {
      best.t = t;
      best.albedo = w.ground_albedo;
      found = true;
    }
  }

  for (const Box& b : w.boxes) {
    // slab test
    double t0 = kMinHitRange;
    double t1 = best.t;
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      const double lo = b.center[a] - 0.5 * b.size[a];
      const double hi = b.center[a] + 0.5 * b.size[a];
      const double d = dir[a];
      if (std::abs(d) < 1e-15) {
        if (origin[a] < lo || origin[a] > hi) miss = true;
        continue;
      }
      double ta = (lo - origin[a]) / d;
      double tb = (hi - origin[a]) / d;
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) miss = true;
    }
    if (!miss) {
      best.t = t0;
      best.albedo = b.albedo;
      found = true;
    }
  }

  if (!found) best.t = -1.0;
  return best;
}

}  // namespace

PointCloud lidar_scan(const World& w, const RigidTransform& pose,
                      const LidarSpec& spec) {
  if (!spec.valid()) throw std::invalid_argument("lidar_scan: invalid spec");
  PointCloud out;
  out.points.reserve(static_cast<size_t>(spec.n_beams) * spec.azimuth_steps);
  out.intensity.reserve(out.points.capacity());

  const Eigen::Vector3d origin = pose.translation;
  for (int b = 0; b < spec.n_beams; ++b) {
    const double frac =
        spec.n_beams > 1 ? static_cast<double>(b) / (spec.n_beams - 1) : 0.5;
    const double el =
        (spec.vfov_min_deg + frac * (spec.vfov_max_deg - spec.vfov_min_deg)) *
        kDegToRad;
    const double ce = std::cos(el);
    const double se = std::sin(el);
    for (int a = 0; a < spec.azimuth_steps; ++a) {
      const double az = 2.0 * M_PI * a / spec.azimuth_steps;
      const Eigen::Vector3d dir_lidar(ce * std::sin(az), ce * std::cos(az), se);
      const Eigen::Vector3d dir_world = pose.rotation * dir_lidar;
      const Hit hit = cast_ray(w, origin, dir_world, spec.max_range);
      if (!hit.valid()) continue;
      // range is preserved by the rigid pose, so the lidar-frame point is
      // just t * dir along the beam
      out.points.push_back(hit.t * dir_lidar);
      out.intensity.push_back(static_cast<float>(hit.albedo));
    }
  }
  return out;
}

Raster render_intensity(const World& w, const RigidTransform& cam_pose,
                        const Intrinsics& k) {
  if (!k.valid()) throw std::invalid_argument("render_intensity: invalid intrinsics");
  Raster out = Raster::zeros(k.width, k.height);
  const Eigen::Vector3d origin = cam_pose.translation;
  // generous range for camera rays; the scene is bounded anyway
  const double range = 1e4;
  for (int r = 0; r < k.height; ++r) {
    for (int c = 0; c < k.width; ++c) {
      const Eigen::Vector3d dir_cam((c - k.cx) / k.fx, (r - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d dir_world = (cam_pose.rotation * dir_cam).normalized();
      const Hit hit = cast_ray(w, origin, dir_world, range);
      if (hit.valid()) out.at(r, c) = static_cast<float>(hit.albedo);
    }
  }
  return out;
}

RigidTransform optical_mount() {
  RigidTransform t;
  t.rotation << 1, 0, 0,
                0, 0, -1,
                0, 1, 0;
  return t;
}

CameraRig default_rig(int width, int height, double baseline) {
  Intrinsics k;
  k.width = width;
  k.height = height;
  k.fx = 300.0 * width / 512.0;
  k.fy = 300.0 * height / 160.0;
  k.cx = width / 2.0;
  k.cy = height / 2.0;

  RigidTransform left = optical_mount();
  // camera sits slightly below and ahead of the scanner
  left.translation = Eigen::Vector3d(0.0, -0.08, -0.27);

  CameraRig rig;
  rig.cameras.push_back({"left", left, k});
  rig.cameras.push_back(
      {"right", RigidTransform::from_translation(-baseline, 0.0, 0.0) * left, k});
  return rig;
}

PointCloud read_lidar_bin(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() % 16 != 0) {
    throw DataError("scan size not a multiple of 16 bytes: " + path.string());
  }
  const size_t n = bytes.size() / 16;
  PointCloud out;
  out.points.reserve(n);
  out.intensity.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    float v[4];
    std::memcpy(v, bytes.data() + i * 16, 16);
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
      throw DataError("non-finite point in scan: " + path.string());
    }
    out.points.emplace_back(v[0], v[1], v[2]);
    out.intensity.push_back(std::clamp(v[3], 0.0f, 1.0f));
  }
  return out;
}

std::map<std::string, Eigen::Matrix<double, 3, 4>> read_calib_file(
    const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::map<std::string, Eigen::Matrix<double, 3, 4>> out;
  std::string line;
  while (std::getline(in, line)) {
    const size_t colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    std::istringstream values(line.substr(colon + 1));
    std::vector<double> v;
    double x;
    while (values >> x) v.push_back(x);
    if (v.size() != 12) continue;
    Eigen::Matrix<double, 3, 4> m;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<size_t>(r) * 4 + c];
    }
    out[key] = m;
  }
  if (out.empty()) throw DataError("no 3x4 entries in calib file: " + path.string());
  return out;
}

RigidTransform rigid_from_3x4(const Eigen::Matrix<double, 3, 4>& m) {
  RigidTransform t;
  t.rotation = project_to_so3(m.leftCols<3>());
  t.translation = m.col(3);
  return t;
}

}  // namespace calibprobe
