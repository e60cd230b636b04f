#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <calibprobe/datagen.hpp>
#include <calibprobe/errors.hpp>
#include <calibprobe/fsio.hpp>
#include <filesystem>
#include <set>

using namespace calibprobe;

namespace {

// small everything: tests here exercise semantics, not scale
struct TestSetup {
  World world;
  CameraRig rig;
  LidarSpec lidar;
  PerturbRange range{0.5, 5.0};

  TestSetup() : rig(default_rig(128, 48, 0.54)) {
    Rng rng(500);
    world = generate_world(10, 30.0, rng);
    lidar.n_beams = 24;
    lidar.azimuth_steps = 180;
    lidar.vfov_min_deg = -25.0;
    lidar.vfov_max_deg = 3.0;
  }
};

}  // namespace

TEST_CASE("zero range reproduces the true-extrinsic projection") {
  TestSetup t;
  Rng rng(1);
  const SampleBundle b =
      make_sample(t.world, t.rig, "left", t.lidar, PerturbRange{0, 0}, rng);
  CHECK(b.sample.label.to_vector().cwiseAbs().maxCoeff() == 0.0);
  const DepthMap reference =
      project(b.cloud, t.rig.camera("left").t_lidar_to_cam, t.rig.camera("left").intrinsics);
  CHECK(b.sample.depth == reference);
}

TEST_CASE("label algebra recovers the true extrinsic") {
  TestSetup t;
  Rng rng(2);
  const SampleBundle b = make_sample(t.world, t.rig, "left", t.lidar, t.range, rng);
  const RigidTransform recovered =
      from_euler(b.sample.label).inverse() * b.decalibrated;
  const RigidTransform expect = b.sample.t_init;
  CHECK((recovered.rotation - expect.rotation).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((recovered.translation - expect.translation).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("same seed gives bit-identical samples") {
  TestSetup t;
  Rng a(77), b(77);
  const SampleBundle sa =
      make_sample(t.world, t.rig, "left", t.lidar, t.range, a, true);
  const SampleBundle sb =
      make_sample(t.world, t.rig, "left", t.lidar, t.range, b, true);
  CHECK(sa.sample.depth == sb.sample.depth);
  CHECK(*sa.sample.intensity == *sb.sample.intensity);
  CHECK(sa.sample.label.to_vector() == sb.sample.label.to_vector());
}

TEST_CASE("undoing the labelled perturbation reproduces the projection") {
  TestSetup t;
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    Rng sample_rng = rng.derive(static_cast<uint64_t>(i));
    const SampleBundle b =
        make_sample(t.world, t.rig, "left", t.lidar, t.range, sample_rng);
    const RigidTransform undone =
        from_euler(b.sample.label).inverse() * b.decalibrated;
    const DepthMap aligned = project(b.cloud, undone, b.sample.depth.intrinsics);
    const DepthMap reference =
        project(b.cloud, b.sample.t_init, b.sample.depth.intrinsics);
    CHECK(aligned == reference);
  }
}

TEST_CASE("degenerate frames are resampled then rejected") {
  TestSetup t;
  // a scanner that only looks up at empty sky never yields valid pixels
  LidarSpec sky = t.lidar;
  sky.vfov_min_deg = 30.0;
  sky.vfov_max_deg = 40.0;
  World empty;  // ground only, nothing to hit above the horizon
  Rng rng(4);
  CHECK_THROWS_AS(make_sample(empty, t.rig, "left", sky, t.range, rng),
                  DegeneracyError);
}

TEST_CASE("paired frame samples share pose and perturbation") {
  TestSetup t;
  Rng rng(5);
  const std::string ids[] = {std::string("left"), std::string("right")};
  const auto bundles = make_frame_samples(t.world, t.rig, ids, t.lidar, t.range, rng);
  REQUIRE(bundles.size() == 2);
  CHECK(bundles[0].sample.label.to_vector() == bundles[1].sample.label.to_vector());
  CHECK(bundles[0].lidar_pose.translation == bundles[1].lidar_pose.translation);
  CHECK(bundles[0].sample.camera_id == "left");
  CHECK(bundles[1].sample.camera_id == "right");
}

TEST_CASE("regenerate_labels identity and inverse") {
  TestSetup t;
  Rng rng(6);
  std::vector<CalibSample> samples;
  for (int i = 0; i < 5; ++i) {
    Rng sr = rng.derive(static_cast<uint64_t>(i));
    samples.push_back(make_sample(t.world, t.rig, "left", t.lidar, t.range, sr).sample);
  }

  const auto same = regenerate_labels(samples, RigidTransform::identity());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK((same[i].label.to_vector() - samples[i].label.to_vector())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }

  const RigidTransform t_rel = t.rig.relative("left", "right");
  const auto forward = regenerate_labels(samples, t_rel);
  const auto back = regenerate_labels(forward, t_rel.inverse());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK((back[i].label.to_vector() - samples[i].label.to_vector())
              .cwiseAbs()
              .maxCoeff() < 1e-9);
  }
}

TEST_CASE("regenerated x labels shift by the baseline on average") {
  TestSetup t;
  const RigidTransform t_rel = t.rig.relative("left", "right");
  REQUIRE(t_rel.translation.x() == doctest::Approx(-0.54));

  Rng rng(7);
  double mean_shift = 0.0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const EulerPerturbation label = sample_perturbation(t.range, rng);
    const EulerPerturbation corrected = regenerate_label(label, t_rel);
    mean_shift += label.tx - corrected.tx;
  }
  mean_shift /= n;
  CHECK(mean_shift == doctest::Approx(0.54).epsilon(0.02));
}

TEST_CASE("augment_crop degenerate fraction is the identity") {
  TestSetup t;
  Rng rng(8);
  const CalibSample s =
      make_sample(t.world, t.rig, "left", t.lidar, t.range, rng, true).sample;
  Rng crng(9);
  const CalibSample out = augment_crop(s, CropMode::both, 0.0, crng);
  CHECK(out.depth == s.depth);
  CHECK(*out.intensity == *s.intensity);
  CHECK(out.depth.intrinsics == s.depth.intrinsics);
}

TEST_CASE("vertical cropping leaves the horizontal intrinsics alone") {
  TestSetup t;
  Rng rng(10);
  const CalibSample s = make_sample(t.world, t.rig, "left", t.lidar, t.range, rng).sample;
  for (int i = 0; i < 50; ++i) {
    Rng crng(100 + static_cast<uint64_t>(i));
    const CalibSample out = augment_crop(s, CropMode::vertical, 0.3, crng);
    CHECK(out.depth.intrinsics.cx == s.depth.intrinsics.cx);
    CHECK(out.depth.intrinsics.fx == s.depth.intrinsics.fx);
    CHECK(out.depth.width() == s.depth.width());
    CHECK(out.depth.height() == s.depth.height());
  }
}

TEST_CASE("augmented rasters always come back at model input size") {
  TestSetup t;
  Rng rng(11);
  const CalibSample s = make_sample(t.world, t.rig, "left", t.lidar, t.range, rng).sample;
  Rng crng(12);
  for (int i = 0; i < 1000; ++i) {
    const CropMode mode = static_cast<CropMode>(i % 3);
    const CalibSample out = augment_crop(s, mode, 0.45, crng);
    CHECK(out.depth.width() == s.depth.width());
    CHECK(out.depth.height() == s.depth.height());
    CHECK(out.label.to_vector() == s.label.to_vector());
  }
}

TEST_CASE("labels stay uniform per component") {
  TestSetup t;
  const PerturbRange range{0.5, 5.0};
  Rng rng(13);
  const int n = 10000;
  std::array<std::vector<double>, 6> values;
  for (auto& v : values) v.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng sr = rng.derive(static_cast<uint64_t>(i));
    // the world varies per sample, the label distribution must not
    Rng wr(splitmix64(static_cast<uint64_t>(i)));
    const World w = generate_world(6, 30.0, wr);
    const auto v =
        make_sample(w, t.rig, "left", t.lidar, range, sr).sample.label.to_vector();
    for (int c = 0; c < 6; ++c) values[static_cast<size_t>(c)].push_back(v[c]);
  }
  for (int c = 0; c < 6; ++c) {
    auto& v = values[static_cast<size_t>(c)];
    std::sort(v.begin(), v.end());
    const double lo = c < 3 ? -range.max_translation : -range.max_rotation;
    const double hi = -lo;
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
      const double f = (v[static_cast<size_t>(i)] - lo) / (hi - lo);
      ks = std::max(ks, std::abs(f - (i + 1.0) / n));
      ks = std::max(ks, std::abs(f - static_cast<double>(i) / n));
    }
    CHECK(ks < 0.02);
  }
}

TEST_CASE("build_dataset writes a reloadable manifest") {
  TestSetup t;
  const auto dir = std::filesystem::temp_directory_path() / "calibprobe_datagen_test";
  std::filesystem::remove_all(dir);

  GenerateConfig cfg;
  cfg.out_dir = dir;
  cfg.seed = 99;
  cfg.n_worlds = 3;
  cfg.train_count = 8;
  cfg.val_count = 0;
  cfg.test_count = 4;
  cfg.cameras = {"left", "right"};
  cfg.width = 128;
  cfg.height = 48;
  cfg.lidar = t.lidar;
  cfg.n_boxes = 10;
  cfg.with_intensity = true;

  const DatasetManifest built = build_dataset(cfg);
  CHECK(built.records.size() == 12);

  const DatasetManifest loaded = load_manifest(dir / "manifest.jsonl");
  REQUIRE(loaded.records.size() == built.records.size());
  CHECK(loaded.config.seed == cfg.seed);
  CHECK(loaded.rig.cameras.size() == 2);
  CHECK(loaded.split("train").size() == 8);
  CHECK(loaded.split("test").size() == 4);

  // cameras alternate 50/50 and records regenerate bit-identically from seed
  int left_count = 0;
  for (const auto* rec : loaded.split("train")) {
    if (rec->camera_id == "left") ++left_count;
  }
  CHECK(left_count == 4);

  const ManifestRecord& rec = *loaded.split("test")[1];
  const CalibSample from_disk = load_sample(loaded, rec);
  Rng reseed(rec.seed);
  Rng wr(rec.world_seed);
  const World w = generate_world(cfg.n_boxes, cfg.extent, wr);
  const SampleBundle regen =
      make_sample(w, loaded.rig, rec.camera_id, cfg.lidar, cfg.range, reseed, true);
  CHECK(regen.sample.depth == from_disk.depth);
  CHECK(*regen.sample.intensity == *from_disk.intensity);

  std::filesystem::remove_all(dir);
}

TEST_CASE("build_dataset with zero samples yields a valid empty manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "calibprobe_datagen_empty";
  std::filesystem::remove_all(dir);
  GenerateConfig cfg;
  cfg.out_dir = dir;
  cfg.seed = 1;
  cfg.train_count = 0;
  cfg.test_count = 0;
  const DatasetManifest built = build_dataset(cfg);
  CHECK(built.records.empty());
  const DatasetManifest loaded = load_manifest(dir / "manifest.jsonl");
  CHECK(loaded.records.empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("splits draw from disjoint world seeds") {
  TestSetup t;
  const auto dir = std::filesystem::temp_directory_path() / "calibprobe_datagen_split";
  std::filesystem::remove_all(dir);
  GenerateConfig cfg;
  cfg.out_dir = dir;
  cfg.seed = 7;
  cfg.n_worlds = 4;
  cfg.train_count = 8;
  cfg.val_count = 8;
  cfg.test_count = 8;
  cfg.width = 128;
  cfg.height = 48;
  cfg.lidar = t.lidar;
  const DatasetManifest built = build_dataset(cfg);

  std::set<uint64_t> train_worlds, val_worlds, test_worlds;
  for (const auto& rec : built.records) {
    if (rec.split == "train") train_worlds.insert(rec.world_seed);
    if (rec.split == "val") val_worlds.insert(rec.world_seed);
    if (rec.split == "test") test_worlds.insert(rec.world_seed);
  }
  for (uint64_t w : train_worlds) {
    CHECK(val_worlds.count(w) == 0);
    CHECK(test_worlds.count(w) == 0);
  }
  for (uint64_t w : val_worlds) CHECK(test_worlds.count(w) == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest load failures surface the file") {
  const auto dir = std::filesystem::temp_directory_path() / "calibprobe_datagen_bad";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  CHECK_THROWS_AS(load_manifest(dir / "manifest.jsonl"), DataError);

  write_file_atomic(dir / "manifest.jsonl", "{\"type\":\"other\"}\n");
  CHECK_THROWS_AS(load_manifest(dir / "manifest.jsonl"), DataError);
  std::filesystem::remove_all(dir);
}
