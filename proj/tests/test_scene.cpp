#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <calibprobe/errors.hpp>
#include <calibprobe/fsio.hpp>
#include <calibprobe/scene.hpp>
#include <cstring>
#include <filesystem>

using namespace calibprobe;

namespace {

RigidTransform sensor_pose() {
  return RigidTransform::from_translation(0, 0, 1.6);
}

bool same_cloud(const PointCloud& a, const PointCloud& b) {
  if (a.points.size() != b.points.size()) return false;
  for (size_t i = 0; i < a.points.size(); ++i) {
    if (a.points[i] != b.points[i]) return false;
    if (a.intensity[i] != b.intensity[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("generate_world is deterministic and respects invariants") {
  Rng a(77), b(77);
  const World wa = generate_world(12, 40.0, a);
  const World wb = generate_world(12, 40.0, b);
  REQUIRE(wa.boxes.size() == 12);
  CHECK(wa.valid());
  for (size_t i = 0; i < wa.boxes.size(); ++i) {
    CHECK(wa.boxes[i].center == wb.boxes[i].center);
    CHECK(wa.boxes[i].center.z() - 0.5 * wa.boxes[i].size.z() >= -1e-12);
    CHECK(wa.boxes[i].size.minCoeff() > 0);
  }

  Rng c(78);
  CHECK(generate_world(0, 40.0, c).boxes.empty());
}

TEST_CASE("horizontal beams over an empty world return nothing") {
  World w;  // ground only
  LidarSpec spec;
  spec.n_beams = 4;
  spec.vfov_min_deg = 0.0;
  spec.vfov_max_deg = 3.0;
  spec.azimuth_steps = 64;
  const PointCloud c = lidar_scan(w, sensor_pose(), spec);
  CHECK(c.points.empty());
}

TEST_CASE("single beam at a box face returns the analytic range") {
  World w;
  Box b;
  b.center = Eigen::Vector3d(0, 10.25, 1.6);  // near face exactly 10 m ahead
  b.size = Eigen::Vector3d(4, 0.5, 2);
  b.albedo = 0.77;
  w.boxes.push_back(b);

  LidarSpec spec;
  spec.n_beams = 1;
  spec.vfov_min_deg = 0.0;
  spec.vfov_max_deg = 0.0;
  spec.azimuth_steps = 8;  // azimuth 0 aims straight down +y
  const PointCloud c = lidar_scan(w, sensor_pose(), spec);
  REQUIRE(c.points.size() == 1);
  CHECK(std::abs(c.points[0].norm() - 10.0) < 1e-9);
  CHECK((c.points[0] - Eigen::Vector3d(0, 10, 0)).norm() < 1e-9);
  CHECK(c.intensity[0] == doctest::Approx(0.77f));
}

TEST_CASE("scan respects the ray budget and max range") {
  Rng rng(80);
  const World w = generate_world(10, 40.0, rng);
  LidarSpec spec;
  const PointCloud c = lidar_scan(w, sensor_pose(), spec);
  CHECK(c.points.size() <= static_cast<size_t>(spec.n_beams) * spec.azimuth_steps);
  for (const auto& p : c.points) CHECK(p.norm() <= spec.max_range + 1e-9);
}

TEST_CASE("scan is deterministic and pose-sensitive") {
  Rng rng(81);
  const World w = generate_world(10, 40.0, rng);
  LidarSpec spec;
  const PointCloud a = lidar_scan(w, sensor_pose(), spec);
  const PointCloud b = lidar_scan(w, sensor_pose(), spec);
  CHECK(same_cloud(a, b));

  RigidTransform moved = sensor_pose();
  moved.translation.x() += 0.5;
  const PointCloud c = lidar_scan(w, moved, spec);
  CHECK_FALSE(same_cloud(a, c));
}

TEST_CASE("render_intensity closed forms") {
  Intrinsics k;
  k.fx = k.fy = 100;
  k.cx = 32;
  k.cy = 24;
  k.width = 64;
  k.height = 48;

  // camera looking straight down +y from above the ground, optical axes
  const RigidTransform cam_pose =
      RigidTransform::from_translation(0, 0, 1.5) * optical_mount().inverse();

  World empty_sky;  // ground only
  empty_sky.ground_albedo = 0.0;  // make even ground hits render as zero
  const Raster dark = render_intensity(empty_sky, cam_pose, k);
  for (float v : dark.data) CHECK(v == 0.0f);

  World boxed;
  Box b;
  b.center = Eigen::Vector3d(0, 5, 1.5);
  b.size = Eigen::Vector3d(50, 0.5, 50);  // fills the frustum
  b.albedo = 0.66;
  boxed.boxes.push_back(b);
  const Raster wall = render_intensity(boxed, cam_pose, k);
  for (float v : wall.data) CHECK(v == doctest::Approx(0.66f));
}

TEST_CASE("lidar points land on pixels with matching intensity") {
  Rng rng(82);
  const World w = generate_world(12, 40.0, rng);
  const CameraRig rig = default_rig(512, 160, 0.54);
  const CameraDef& cam = rig.camera("left");
  const RigidTransform lidar_pose = sensor_pose();

  LidarSpec spec;
  const PointCloud cloud = lidar_scan(w, lidar_pose, spec);
  REQUIRE(cloud.points.size() > 500);

  const RigidTransform cam_pose = lidar_pose * cam.t_lidar_to_cam.inverse();
  const Raster img = render_intensity(w, cam_pose, cam.intrinsics);

  int visible = 0, matched = 0;
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const auto uvd = project_point(cloud.points[i], cam.t_lidar_to_cam, cam.intrinsics);
    if (!uvd) continue;
    const long u = std::lround(uvd->x());
    const long v = std::lround(uvd->y());
    if (u < 0 || u >= cam.intrinsics.width || v < 0 || v >= cam.intrinsics.height) {
      continue;
    }
    ++visible;
    if (std::abs(img.at(static_cast<int>(v), static_cast<int>(u)) -
                 cloud.intensity[i]) < 1e-6) {
      ++matched;
    }
  }
  REQUIRE(visible > 200);
  CHECK(static_cast<double>(matched) / visible >= 0.95);
}

TEST_CASE("default rig geometry") {
  const CameraRig rig = default_rig(512, 160, 0.54);
  REQUIRE(rig.has("left"));
  REQUIRE(rig.has("right"));
  CHECK(rig.camera("left").t_lidar_to_cam.is_valid());

  // a forward lidar point appears 0.54 m to the left in the right camera
  const Eigen::Vector3d p(0, 20, 0);
  const Eigen::Vector3d in_left = rig.camera("left").t_lidar_to_cam * p;
  const Eigen::Vector3d in_right = rig.camera("right").t_lidar_to_cam * p;
  CHECK((in_left - in_right - Eigen::Vector3d(0.54, 0, 0)).norm() < 1e-12);

  const RigidTransform rel = rig.relative("left", "right");
  CHECK((rel.translation - Eigen::Vector3d(-0.54, 0, 0)).norm() < 1e-12);
  CHECK((rel.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("binary scan reader round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "calibprobe_scene_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "scan.bin";

  const float values[8] = {1.0f, 2.0f, 3.0f, 0.5f, -4.0f, 0.25f, 9.0f, 2.0f};
  std::string bytes(reinterpret_cast<const char*>(values), sizeof(values));
  write_file_atomic(path, bytes);

  const PointCloud c = read_lidar_bin(path);
  REQUIRE(c.points.size() == 2);
  CHECK((c.points[0] - Eigen::Vector3d(1, 2, 3)).norm() == 0.0);
  CHECK(c.intensity[0] == 0.5f);
  CHECK(c.intensity[1] == 1.0f);  // reflectance 2.0 clamps into [0, 1]

  write_file_atomic(path, bytes.substr(0, 20));
  CHECK_THROWS_AS(read_lidar_bin(path), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("calibration text parser") {
  const auto dir = std::filesystem::temp_directory_path() / "calibprobe_scene_test2";
  std::filesystem::create_directories(dir);
  const auto path = dir / "calib.txt";
  write_file_atomic(path,
                    "P0: 1 0 0 0 0 1 0 0 0 0 1 0\n"
                    "comment line without values\n"
                    "Tr: 1 0 0 0.5 0 0 -1 0.1 0 1 0 -0.2\n"
                    "short: 1 2 3\n");
  const auto entries = read_calib_file(path);
  REQUIRE(entries.size() == 2);
  REQUIRE(entries.count("Tr") == 1);

  const RigidTransform tr = rigid_from_3x4(entries.at("Tr"));
  CHECK(tr.is_valid(1e-9));
  CHECK((tr.translation - Eigen::Vector3d(0.5, 0.1, -0.2)).norm() < 1e-12);

  write_file_atomic(path, "nothing to parse\n");
  CHECK_THROWS_AS(read_calib_file(path), DataError);
  std::filesystem::remove_all(dir);
}
