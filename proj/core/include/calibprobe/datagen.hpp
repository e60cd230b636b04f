#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calibprobe/geometry.hpp"
#include "calibprobe/scene.hpp"
#include "calibprobe/sensor.hpp"

namespace calibprobe {

/// One training/eval record: the de-calibrated depth raster, an optional
/// camera intensity raster, and the perturbation that produced it.
struct CalibSample {
  DepthMap depth;
  std::optional<Raster> intensity;
  EulerPerturbation label;  // the drawn perturbation, to be regressed
  std::string camera_id;
  RigidTransform t_init;  // the camera's true extrinsic (LiDAR -> camera)
  uint64_t seed = 0;
  uint64_t world_seed = 0;
};

/// A sample plus the intermediates tests need: the scanned cloud (LiDAR
/// frame), the sensor pose, and the de-calibrated projection transform
/// delta * t_init.
struct SampleBundle {
  CalibSample sample;
  PointCloud cloud;
  RigidTransform lidar_pose;
  RigidTransform decalibrated;
};

/// Scans a frame and builds one de-calibrated sample per requested camera,
/// all sharing the same sensor pose and perturbation draw. The sensor pose
/// jitters around the corridor origin (x +-0.8 m, y [0,1] m, z 1.6 m, yaw
/// +-3 deg; drawn in that order, then the perturbation). Frames where any
/// camera collects fewer than 50 valid depth pixels are redrawn up to 10
/// times before DegeneracyError.
std::vector<SampleBundle> make_frame_samples(
    const World& w, const CameraRig& rig, std::span<const std::string> camera_ids,
    const LidarSpec& spec, const PerturbRange& range, Rng& rng,
    bool with_intensity = false);

SampleBundle make_sample(const World& w, const CameraRig& rig,
                         const std::string& camera_id, const LidarSpec& spec,
                         const PerturbRange& range, Rng& rng,
                         bool with_intensity = false);

/// The label a model trained on another camera should target for this
/// sample: the original perturbation composed with the inter-camera
/// transform. Throws DegeneracyError on gimbal lock in the re-decomposition.
EulerPerturbation regenerate_label(const EulerPerturbation& label,
                                   const RigidTransform& t_rel);
std::vector<CalibSample> regenerate_labels(std::vector<CalibSample> samples,
                                           const RigidTransform& t_rel);

enum class CropMode { vertical, horizontal, both };

/// Random crop of up to max_frac of the selected dimension(s), intrinsics
/// rewritten by the crop, then nearest-neighbor rescale back to the original
/// raster size with the focal lengths scaled to match. The label is
/// deliberately unchanged. Draw order: vertical fraction, vertical offset,
/// horizontal fraction, horizontal offset (only for the active modes).
CalibSample augment_crop(const CalibSample& s, CropMode mode, double max_frac,
                         Rng& rng);

// ---------------------------------------------------------------------------
// Dataset serialization
// ---------------------------------------------------------------------------

struct GenerateConfig {
  std::filesystem::path out_dir;
  uint64_t seed = 0;
  int n_worlds = 30;            // per split
  int train_count = 2000;
  int val_count = 0;
  int test_count = 500;
  std::vector<std::string> cameras = {"left"};
  PerturbRange range{0.5, 5.0};
  int width = 512;
  int height = 160;
  LidarSpec lidar{};
  double extent = 40.0;
  int n_boxes = 14;
  double baseline = 0.54;
  bool with_intensity = false;
  int threads = 0;

  void validate() const;
};

struct ManifestRecord {
  std::string split;
  int index = 0;
  std::string camera_id;
  std::string depth_path;      // relative to the manifest directory
  std::string intensity_path;  // empty when absent
  EulerPerturbation label;
  Intrinsics intrinsics;
  uint64_t seed = 0;
  uint64_t world_seed = 0;
  RigidTransform t_init;
};

struct DatasetManifest {
  int version = 1;
  GenerateConfig config;
  CameraRig rig;
  std::vector<ManifestRecord> records;
  std::filesystem::path root;  // directory holding the manifest

  std::vector<const ManifestRecord*> split(const std::string& name) const;
};

/// Writes rasters plus a manifest (one self-describing key-value record per
/// line) under config.out_dir. Train/val/test worlds draw from disjoint seed
/// streams. When several cameras are listed, samples alternate over them.
DatasetManifest build_dataset(const GenerateConfig& config);

/// Parses a manifest and checks every referenced raster exists.
DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

CalibSample load_sample(const DatasetManifest& manifest,
                        const ManifestRecord& record);

}  // namespace calibprobe
