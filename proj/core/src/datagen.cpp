#include "calibprobe/datagen.hpp"

#include <json.hpp>
#include <sstream>

#include "calibprobe/errors.hpp"
#include "calibprobe/fsio.hpp"
#include "calibprobe/parallel.hpp"

namespace calibprobe {

namespace {

using nlohmann::json;

constexpr int kMinValidPixels = 50;
constexpr int kMaxResamples = 10;

// sensor pose jitter around the corridor origin
constexpr double kPoseJitterX = 0.8;
constexpr double kPoseJitterY = 1.0;
constexpr double kSensorHeight = 1.6;
constexpr double kPoseJitterYawDeg = 3.0;

RigidTransform draw_pose(Rng& rng) {
  EulerPerturbation e;
  e.tx = rng.uniform(-kPoseJitterX, kPoseJitterX);
  e.ty = rng.uniform(0.0, kPoseJitterY);
  e.tz = kSensorHeight;
  e.yaw = rng.uniform(-kPoseJitterYawDeg, kPoseJitterYawDeg);
  return from_euler(e);
}

}  // namespace

std::vector<SampleBundle> make_frame_samples(
    const World& w, const CameraRig& rig,
    std::span<const std::string> camera_ids, const LidarSpec& spec,
    const PerturbRange& range, Rng& rng, bool with_intensity) {
  if (camera_ids.empty()) throw ConfigError("make_frame_samples: no cameras");
  for (const auto& id : camera_ids) {
    if (!rig.has(id)) throw ConfigError("unknown camera id: " + id);
  }
  if (!range.valid()) throw ConfigError("invalid perturbation range");

  const uint64_t seed = rng.seed();
  for (int attempt = 0; attempt <= kMaxResamples; ++attempt) {
    const RigidTransform pose = draw_pose(rng);
    const EulerPerturbation delta = sample_perturbation(range, rng);
    const RigidTransform delta_t = from_euler(delta);
    const PointCloud cloud = lidar_scan(w, pose, spec);

    std::vector<SampleBundle> out;
    out.reserve(camera_ids.size());
    bool degenerate = false;
    for (const auto& id : camera_ids) {
      const CameraDef& cam = rig.camera(id);
      SampleBundle b;
      b.cloud = cloud;
      b.lidar_pose = pose;
      // de-calibration on the camera side of the extrinsic
      b.decalibrated = delta_t * cam.t_lidar_to_cam;
      b.sample.depth = project(cloud, b.decalibrated, cam.intrinsics);
      if (b.sample.depth.valid_count() < kMinValidPixels) {
        degenerate = true;
        break;
      }
      if (with_intensity) {
        const RigidTransform cam_pose = pose * cam.t_lidar_to_cam.inverse();
        b.sample.intensity = render_intensity(w, cam_pose, cam.intrinsics);
      }
      b.sample.label = delta;
      b.sample.camera_id = id;
      b.sample.t_init = cam.t_lidar_to_cam;
      b.sample.seed = seed;
      b.sample.world_seed = w.seed;
      out.push_back(std::move(b));
    }
    if (!degenerate) return out;
  }
  throw DegeneracyError("make_frame_samples: fewer than " +
                        std::to_string(kMinValidPixels) +
                        " valid pixels after " + std::to_string(kMaxResamples) +
                        " resamples (seed " + std::to_string(seed) + ")");
}

SampleBundle make_sample(const World& w, const CameraRig& rig,
                         const std::string& camera_id, const LidarSpec& spec,
                         const PerturbRange& range, Rng& rng,
                         bool with_intensity) {
  const std::string ids[] = {camera_id};
  auto bundles = make_frame_samples(w, rig, ids, spec, range, rng, with_intensity);
  return std::move(bundles.front());
}

EulerPerturbation regenerate_label(const EulerPerturbation& label,
                                   const RigidTransform& t_rel) {
  const EulerDecomposition d = decompose_euler(from_euler(label) * t_rel);
  if (d.gimbal_lock) {
    throw DegeneracyError("regenerate_label: gimbal lock in re-decomposition");
  }
  return d.angles;
}

std::vector<CalibSample> regenerate_labels(std::vector<CalibSample> samples,
                                           const RigidTransform& t_rel) {
  if (!t_rel.is_valid(1e-9)) throw ConfigError("regenerate_labels: invalid t_rel");
  for (CalibSample& s : samples) s.label = regenerate_label(s.label, t_rel);
  return samples;
}

CalibSample augment_crop(const CalibSample& s, CropMode mode, double max_frac,
                         Rng& rng) {
  if (!(max_frac >= 0.0 && max_frac < 0.5)) {
    throw ConfigError("augment_crop: max_frac must be in [0, 0.5)");
  }
  const int w_full = s.depth.width();
  const int h_full = s.depth.height();
  int x0 = 0, y0 = 0, w = w_full, h = h_full;
  if (mode == CropMode::vertical || mode == CropMode::both) {
    const double frac = rng.uniform(0.0, max_frac);
    h = std::max(1, h_full - static_cast<int>(std::lround(frac * h_full)));
    y0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(h_full - h) + 1));
  }
  if (mode == CropMode::horizontal || mode == CropMode::both) {
    const double frac = rng.uniform(0.0, max_frac);
    w = std::max(1, w_full - static_cast<int>(std::lround(frac * w_full)));
    x0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(w_full - w) + 1));
  }

  CalibSample out = s;
  out.depth = resize_nearest(crop(s.depth, x0, y0, w, h), w_full, h_full);
  if (s.intensity) {
    out.intensity = resize_nearest(crop(*s.intensity, x0, y0, w, h), w_full, h_full);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {

json to_json(const Eigen::Matrix3d& r) {
  json a = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) a.push_back(r(i, j));
  }
  return a;
}

Eigen::Matrix3d mat3_from_json(const json& a) {
  Eigen::Matrix3d r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r(i, j) = a.at(static_cast<size_t>(3 * i + j)).get<double>();
  }
  return r;
}

json to_json(const RigidTransform& t) {
  return json{{"r", to_json(t.rotation)},
              {"t", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

RigidTransform rigid_from_json(const json& j) {
  RigidTransform t;
  t.rotation = mat3_from_json(j.at("r"));
  t.translation = Eigen::Vector3d(j.at("t").at(0).get<double>(),
                                  j.at("t").at(1).get<double>(),
                                  j.at("t").at(2).get<double>());
  return t;
}

json to_json(const Intrinsics& k) {
  return json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
              {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from_json(const json& j) {
  Intrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  return k;
}

json to_json(const EulerPerturbation& e) {
  return json{{"roll", e.roll}, {"pitch", e.pitch}, {"yaw", e.yaw},
              {"tx", e.tx},     {"ty", e.ty},       {"tz", e.tz}};
}

EulerPerturbation euler_from_json(const json& j) {
  EulerPerturbation e;
  e.roll = j.at("roll").get<double>();
  e.pitch = j.at("pitch").get<double>();
  e.yaw = j.at("yaw").get<double>();
  e.tx = j.at("tx").get<double>();
  e.ty = j.at("ty").get<double>();
  e.tz = j.at("tz").get<double>();
  return e;
}

struct SplitPlan {
  std::string name;
  uint64_t tag = 0;  // rng derivation index for this split
  int count = 0;
};

}  // namespace

void GenerateConfig::validate() const {
  if (train_count < 0 || val_count < 0 || test_count < 0) {
    throw ConfigError("sample counts must be non-negative");
  }
  if (n_worlds < 1) throw ConfigError("n_worlds must be positive");
  if (cameras.empty()) throw ConfigError("at least one camera required");
  if (!range.valid()) throw ConfigError("invalid perturbation range");
  if (width < 8 || height < 8) throw ConfigError("raster too small");
  if (!lidar.valid()) throw ConfigError("invalid lidar spec");
  if (extent <= 0 || n_boxes < 0) throw ConfigError("invalid world parameters");
  if (baseline < 0) throw ConfigError("baseline must be non-negative");
}

std::vector<const ManifestRecord*> DatasetManifest::split(
    const std::string& name) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records) {
    if (r.split == name) out.push_back(&r);
  }
  return out;
}

DatasetManifest build_dataset(const GenerateConfig& config) {
  config.validate();
  const CameraRig rig = default_rig(config.width, config.height, config.baseline);
  for (const auto& id : config.cameras) {
    if (!rig.has(id)) throw ConfigError("unknown camera id: " + id);
  }

  std::filesystem::create_directories(config.out_dir / "rasters");

  DatasetManifest manifest;
  manifest.config = config;
  manifest.rig = rig;
  manifest.root = config.out_dir;

  const Rng master(config.seed);
  const SplitPlan plans[] = {{"train", 1, config.train_count},
                             {"val", 2, config.val_count},
                             {"test", 3, config.test_count}};

  for (const SplitPlan& plan : plans) {
    if (plan.count == 0) continue;
    // scene-level split: each split owns a disjoint world-seed stream
    Rng world_rng = master.derive(1000 + plan.tag);
    std::vector<World> worlds;
    worlds.reserve(static_cast<size_t>(config.n_worlds));
    for (int i = 0; i < config.n_worlds; ++i) {
      Rng wr = world_rng.derive(static_cast<uint64_t>(i));
      worlds.push_back(generate_world(config.n_boxes, config.extent, wr));
    }

    std::vector<SampleBundle> bundles(static_cast<size_t>(plan.count));
    const Rng split_rng = master.derive(plan.tag);
    parallel_for(static_cast<size_t>(plan.count), config.threads, [&](size_t i) {
      Rng sample_rng = split_rng.derive(i);
      const World& w = worlds[i % worlds.size()];
      const std::string& camera = config.cameras[i % config.cameras.size()];
      bundles[i] = make_sample(w, rig, camera, config.lidar, config.range,
                               sample_rng, config.with_intensity);
    });

    for (int i = 0; i < plan.count; ++i) {
      const CalibSample& s = bundles[static_cast<size_t>(i)].sample;
      char name[64];
      std::snprintf(name, sizeof(name), "rasters/%s_%06d", plan.name.c_str(), i);
      ManifestRecord rec;
      rec.split = plan.name;
      rec.index = i;
      rec.camera_id = s.camera_id;
      rec.depth_path = std::string(name) + "_depth.dpr";
      save_depth(s.depth, config.out_dir / rec.depth_path);
      if (s.intensity) {
        rec.intensity_path = std::string(name) + "_intensity.dpr";
        write_raster_file(config.out_dir / rec.intensity_path,
                          s.intensity->width, s.intensity->height,
                          s.intensity->data);
      }
      rec.label = s.label;
      rec.intrinsics = s.depth.intrinsics;
      rec.seed = s.seed;
      rec.world_seed = s.world_seed;
      rec.t_init = s.t_init;
      manifest.records.push_back(std::move(rec));
    }
  }

  // one self-describing record per line: a header object, then sample objects
  std::ostringstream out;
  json header{
      {"type", "calibprobe_manifest"},
      {"version", manifest.version},
      {"seed", config.seed},
      {"n_worlds", config.n_worlds},
      {"counts",
       {{"train", config.train_count}, {"val", config.val_count}, {"test", config.test_count}}},
      {"cameras", config.cameras},
      {"range",
       {{"max_translation", config.range.max_translation},
        {"max_rotation", config.range.max_rotation}}},
      {"raster", {{"width", config.width}, {"height", config.height}}},
      {"lidar",
       {{"n_beams", config.lidar.n_beams},
        {"vfov_min_deg", config.lidar.vfov_min_deg},
        {"vfov_max_deg", config.lidar.vfov_max_deg},
        {"azimuth_steps", config.lidar.azimuth_steps},
        {"max_range", config.lidar.max_range}}},
      {"world", {{"extent", config.extent}, {"n_boxes", config.n_boxes}}},
      {"baseline", config.baseline},
      {"with_intensity", config.with_intensity},
  };
  json rig_json = json::array();
  for (const auto& cam : rig.cameras) {
    rig_json.push_back(json{{"id", cam.id},
                            {"intrinsics", to_json(cam.intrinsics)},
                            {"t_lidar_to_cam", to_json(cam.t_lidar_to_cam)}});
  }
  header["rig"] = rig_json;
  out << header.dump() << "\n";

  for (const auto& rec : manifest.records) {
    json line{{"type", "sample"},
              {"split", rec.split},
              {"index", rec.index},
              {"camera_id", rec.camera_id},
              {"depth", rec.depth_path},
              {"label", to_json(rec.label)},
              {"intrinsics", to_json(rec.intrinsics)},
              {"seed", rec.seed},
              {"world_seed", rec.world_seed},
              {"t_init", to_json(rec.t_init)}};
    if (!rec.intensity_path.empty()) line["intensity"] = rec.intensity_path;
    out << line.dump() << "\n";
  }
  write_file_atomic(config.out_dir / "manifest.jsonl", out.str());
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
  std::istringstream in(read_file(manifest_path));
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty manifest: " + manifest_path.string());

  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError("bad manifest header: " + std::string(e.what()));
  }
  if (header.value("type", "") != "calibprobe_manifest") {
    throw DataError("not a calibprobe manifest: " + manifest_path.string());
  }

  DatasetManifest m;
  m.root = manifest_path.parent_path();
  try {
    m.version = header.at("version").get<int>();
    GenerateConfig& c = m.config;
    c.out_dir = m.root;
    c.seed = header.at("seed").get<uint64_t>();
    c.n_worlds = header.at("n_worlds").get<int>();
    c.train_count = header.at("counts").at("train").get<int>();
    c.val_count = header.at("counts").at("val").get<int>();
    c.test_count = header.at("counts").at("test").get<int>();
    c.cameras = header.at("cameras").get<std::vector<std::string>>();
    c.range.max_translation = header.at("range").at("max_translation").get<double>();
    c.range.max_rotation = header.at("range").at("max_rotation").get<double>();
    c.width = header.at("raster").at("width").get<int>();
    c.height = header.at("raster").at("height").get<int>();
    c.lidar.n_beams = header.at("lidar").at("n_beams").get<int>();
    c.lidar.vfov_min_deg = header.at("lidar").at("vfov_min_deg").get<double>();
    c.lidar.vfov_max_deg = header.at("lidar").at("vfov_max_deg").get<double>();
    c.lidar.azimuth_steps = header.at("lidar").at("azimuth_steps").get<int>();
    c.lidar.max_range = header.at("lidar").at("max_range").get<double>();
    c.extent = header.at("world").at("extent").get<double>();
    c.n_boxes = header.at("world").at("n_boxes").get<int>();
    c.baseline = header.at("baseline").get<double>();
    c.with_intensity = header.at("with_intensity").get<bool>();
    for (const auto& cam : header.at("rig")) {
      CameraDef def;
      def.id = cam.at("id").get<std::string>();
      def.intrinsics = intrinsics_from_json(cam.at("intrinsics"));
      def.t_lidar_to_cam = rigid_from_json(cam.at("t_lidar_to_cam"));
      m.rig.cameras.push_back(std::move(def));
    }

    size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (j.value("type", "") != "sample") {
        throw DataError("unexpected record at line " + std::to_string(lineno));
      }
      ManifestRecord rec;
      rec.split = j.at("split").get<std::string>();
      rec.index = j.at("index").get<int>();
      rec.camera_id = j.at("camera_id").get<std::string>();
      rec.depth_path = j.at("depth").get<std::string>();
      rec.intensity_path = j.value("intensity", "");
      rec.label = euler_from_json(j.at("label"));
      rec.intrinsics = intrinsics_from_json(j.at("intrinsics"));
      rec.seed = j.at("seed").get<uint64_t>();
      rec.world_seed = j.at("world_seed").get<uint64_t>();
      rec.t_init = rigid_from_json(j.at("t_init"));
      m.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DataError("bad manifest record: " + std::string(e.what()));
  }

  for (const auto& rec : m.records) {
    if (!std::filesystem::exists(m.root / rec.depth_path)) {
      throw DataError("missing raster: " + rec.depth_path);
    }
    if (!rec.intensity_path.empty() &&
        !std::filesystem::exists(m.root / rec.intensity_path)) {
      throw DataError("missing raster: " + rec.intensity_path);
    }
  }
  return m;
}

CalibSample load_sample(const DatasetManifest& manifest,
                        const ManifestRecord& record) {
  CalibSample s;
  s.depth = load_depth(manifest.root / record.depth_path, record.intrinsics);
  if (!record.intensity_path.empty()) {
    s.intensity = read_raster_file(manifest.root / record.intensity_path);
  }
  s.label = record.label;
  s.camera_id = record.camera_id;
  s.t_init = record.t_init;
  s.seed = record.seed;
  s.world_seed = record.world_seed;
  return s;
}

}  // namespace calibprobe
