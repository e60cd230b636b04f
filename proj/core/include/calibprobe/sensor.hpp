#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "calibprobe/geometry.hpp"
#include "calibprobe/rng.hpp"

namespace calibprobe {

/// Points closer than this to the image plane are culled before projection.
constexpr double kMinProjectionDepth = 0.1;

/// Pinhole parameters. All quantities in pixels.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 &&
           cx < width && cy >= 0.0 && cy < height;
  }
  bool operator==(const Intrinsics&) const = default;
};

/// Dense float raster, row-major. Used for intensity images and as the
/// storage behind DepthMap.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  static Raster zeros(int width, int height) {
    return Raster{width, height,
                  std::vector<float>(static_cast<size_t>(width) * height, 0.0f)};
  }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
  float& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
  bool operator==(const Raster&) const = default;
};

/// Sparse projected depth raster. 0 marks "no return"; valid depths are
/// strictly positive (meters).
struct DepthMap {
  Intrinsics intrinsics;
  std::vector<float> data;  // height * width, row-major

  static DepthMap zeros(const Intrinsics& k) {
    DepthMap d;
    d.intrinsics = k;
    d.data.assign(static_cast<size_t>(k.width) * k.height, 0.0f);
    return d;
  }
  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
  float at(int r, int c) const {
    return data[static_cast<size_t>(r) * intrinsics.width + c];
  }
  float& at(int r, int c) {
    return data[static_cast<size_t>(r) * intrinsics.width + c];
  }
  int valid_count() const;
  bool operator==(const DepthMap&) const = default;
};

/// N x 3 point cloud in the sensor frame; optional per-point intensity in
/// [0, 1] (empty when absent).
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<float> intensity;

  size_t size() const { return points.size(); }
  bool has_intensity() const { return !intensity.empty(); }
};

/// Continuous (un-rounded) projection of a single point: returns (u, v, d) or
/// nullopt when the point is behind the near plane. Bounds are not checked.
std::optional<Eigen::Vector3d> project_point(const Eigen::Vector3d& p,
                                             const RigidTransform& extrinsic,
                                             const Intrinsics& k);

/// Projects a cloud into a z-buffered sparse depth raster. Pixel coordinates
/// round to nearest; ties keep the minimum depth.
DepthMap project(const PointCloud& cloud, const RigidTransform& extrinsic,
                 const Intrinsics& k);

/// Same contract as project(), implemented over batched matrix products.
/// Two routes through the projection equations that must agree exactly.
DepthMap project_batch(const PointCloud& cloud, const RigidTransform& extrinsic,
                       const Intrinsics& k);

/// Inverse pinhole map: pixel + depth -> camera-frame point.
Eigen::Vector3d backproject(double u, double v, double d, const Intrinsics& k);

/// Copies the rectangle [x0, x0+w) x [y0, y0+h) and shifts the principal
/// point; focal lengths are untouched.
DepthMap crop(const DepthMap& d, int x0, int y0, int w, int h);

/// Plain rectangle copy for intensity rasters.
Raster crop(const Raster& r, int x0, int y0, int w, int h);

/// Translates the raster content by (dx, dy) pixels. Vacated pixels become
/// invalid. Intrinsics metadata is deliberately left unchanged: this is the
/// un-modeled raster motion probe, not a camera model edit.
DepthMap shift(const DepthMap& d, int dx, int dy);

/// Min-depth dilation: each invalid pixel takes the smallest valid depth in
/// its kernel x kernel neighborhood (foreground wins). Valid pixels are
/// never altered.
DepthMap densify(const DepthMap& d, int kernel);

/// Keeps each valid pixel independently with probability ratio.
DepthMap downsample(const DepthMap& d, double ratio, Rng& rng);

/// Nearest-neighbor resize with consistent intrinsics rescale. Depth values
/// are copied, never interpolated.
DepthMap resize_nearest(const DepthMap& d, int new_width, int new_height);
Raster resize_nearest(const Raster& r, int new_width, int new_height);

// ---------------------------------------------------------------------------
// Raster file format: 16-byte header (magic "DPR1", u32 width, u32 height,
// u32 reserved, little-endian) followed by row-major 32-bit IEEE-754 LE
// values. Intrinsics travel in the dataset manifest, not in the file.
// ---------------------------------------------------------------------------
void write_raster_file(const std::filesystem::path& path, int width, int height,
                       std::span<const float> data);
Raster read_raster_file(const std::filesystem::path& path);

void save_depth(const DepthMap& d, const std::filesystem::path& path);
DepthMap load_depth(const std::filesystem::path& path, const Intrinsics& k);

}  // namespace calibprobe
