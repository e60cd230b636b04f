#include "calibprobe/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "calibprobe/fsio.hpp"

namespace calibprobe {

int DepthMap::valid_count() const {
  int n = 0;
  for (const float v : data) {
    if (v > 0.0f) ++n;
  }
  return n;
}

std::optional<Eigen::Vector3d> project_point(const Eigen::Vector3d& p,
                                             const RigidTransform& extrinsic,
                                             const Intrinsics& k) {
  const Eigen::Vector3d q = extrinsic * p;
  if (q.z() <= kMinProjectionDepth) return std::nullopt;
  const double u = k.fx * q.x() / q.z() + k.cx;
  const double v = k.fy * q.y() / q.z() + k.cy;
  return Eigen::Vector3d(u, v, q.z());
}

DepthMap project(const PointCloud& cloud, const RigidTransform& extrinsic,
                 const Intrinsics& k) {
  if (!k.valid()) throw std::invalid_argument("project: invalid intrinsics");
  DepthMap out = DepthMap::zeros(k);
  for (const Eigen::Vector3d& p : cloud.points) {
    const Eigen::Vector3d q = extrinsic.rotation * p + extrinsic.translation;
    if (q.z() <= kMinProjectionDepth) continue;
    const long u = std::lround(k.fx * q.x() / q.z() + k.cx);
    const long v = std::lround(k.fy * q.y() / q.z() + k.cy);
    if (u < 0 || u >= k.width || v < 0 || v >= k.height) continue;
    float& cell = out.at(static_cast<int>(v), static_cast<int>(u));
    const float d = static_cast<float>(q.z());
    if (cell == 0.0f || d < cell) cell = d;
  }
  return out;
}

DepthMap project_batch(const PointCloud& cloud, const RigidTransform& extrinsic,
                       const Intrinsics& k) {
  if (!k.valid()) throw std::invalid_argument("project: invalid intrinsics");
  DepthMap out = DepthMap::zeros(k);
  const Eigen::Index n = static_cast<Eigen::Index>(cloud.points.size());
  if (n == 0) return out;

  Eigen::Matrix3Xd pts(3, n);
  for (Eigen::Index i = 0; i < n; ++i) pts.col(i) = cloud.points[i];
  const Eigen::Matrix3Xd cam =
      (extrinsic.rotation * pts).colwise() + extrinsic.translation;
  const Eigen::ArrayXd z = cam.row(2).transpose().array();
  const Eigen::ArrayXd u = k.fx * cam.row(0).transpose().array() / z + k.cx;
  const Eigen::ArrayXd v = k.fy * cam.row(1).transpose().array() / z + k.cy;

  for (Eigen::Index i = 0; i < n; ++i) {
    if (z[i] <= kMinProjectionDepth) continue;
    const long ui = std::lround(u[i]);
    const long vi = std::lround(v[i]);
    if (ui < 0 || ui >= k.width || vi < 0 || vi >= k.height) continue;
    float& cell = out.at(static_cast<int>(vi), static_cast<int>(ui));
    const float d = static_cast<float>(z[i]);
    if (cell == 0.0f || d < cell) cell = d;
  }
  return out;
}

Eigen::Vector3d backproject(double u, double v, double d, const Intrinsics& k) {
  if (d <= 0.0) throw std::invalid_argument("backproject: depth must be positive");
  return Eigen::Vector3d(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d);
}

DepthMap crop(const DepthMap& d, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > d.width() ||
      y0 + h > d.height()) {
    throw std::invalid_argument("crop: rectangle outside raster");
  }
  DepthMap out;
  out.intrinsics = d.intrinsics;
  out.intrinsics.width = w;
  out.intrinsics.height = h;
  out.intrinsics.cx = d.intrinsics.cx - x0;
  out.intrinsics.cy = d.intrinsics.cy - y0;
  out.data.resize(static_cast<size_t>(w) * h);
  for (int r = 0; r < h; ++r) {
    std::memcpy(&out.data[static_cast<size_t>(r) * w], &d.data[static_cast<size_t>(y0 + r) * d.width() + x0],
                sizeof(float) * static_cast<size_t>(w));
  }
  return out;
}

Raster crop(const Raster& r, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > r.width ||
      y0 + h > r.height) {
    throw std::invalid_argument("crop: rectangle outside raster");
  }
  Raster out = Raster::zeros(w, h);
  for (int rr = 0; rr < h; ++rr) {
    std::memcpy(&out.data[static_cast<size_t>(rr) * w],
                &r.data[static_cast<size_t>(y0 + rr) * r.width + x0],
                sizeof(float) * static_cast<size_t>(w));
  }
  return out;
}

DepthMap shift(const DepthMap& d, int dx, int dy) {
  if (std::abs(dx) >= d.width() || std::abs(dy) >= d.height()) {
    throw std::invalid_argument("shift: offset exceeds raster size");
  }
  DepthMap out = DepthMap::zeros(d.intrinsics);
  for (int r = 0; r < d.height(); ++r) {
    const int sr = r - dy;
    if (sr < 0 || sr >= d.height()) continue;
    for (int c = 0; c < d.width(); ++c) {
      const int sc = c - dx;
      if (sc < 0 || sc >= d.width()) continue;
      out.at(r, c) = d.at(sr, sc);
    }
  }
  return out;
}

DepthMap densify(const DepthMap& d, int kernel) {
  if (kernel < 3 || kernel % 2 == 0) {
    throw std::invalid_argument("densify: kernel must be odd and >= 3");
  }
  const int half = kernel / 2;
  DepthMap out = d;
  for (int r = 0; r < d.height(); ++r) {
    for (int c = 0; c < d.width(); ++c) {
      if (d.at(r, c) > 0.0f) continue;
      float best = 0.0f;
      const int r0 = std::max(0, r - half);
      const int r1 = std::min(d.height() - 1, r + half);
      const int c0 = std::max(0, c - half);
      const int c1 = std::min(d.width() - 1, c + half);
      for (int rr = r0; rr <= r1; ++rr) {
        for (int cc = c0; cc <= c1; ++cc) {
          const float v = d.at(rr, cc);
          if (v > 0.0f && (best == 0.0f || v < best)) best = v;
        }
      }
      if (best > 0.0f) out.at(r, c) = best;
    }
  }
  return out;
}

DepthMap downsample(const DepthMap& d, double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument("downsample: ratio must be in (0, 1]");
  }
  DepthMap out = d;
  for (float& v : out.data) {
    if (v > 0.0f && !rng.bernoulli(ratio)) v = 0.0f;
  }
  return out;
}

namespace {

// Pixel centers sit at integer coordinates; a raster resized by factor s maps
// the continuous coordinate u -> s * (u + 0.5) - 0.5.
void rescale_intrinsics(Intrinsics& k, int new_width, int new_height) {
  const double sx = static_cast<double>(new_width) / k.width;
  const double sy = static_cast<double>(new_height) / k.height;
  k.fx *= sx;
  k.fy *= sy;
  k.cx = sx * (k.cx + 0.5) - 0.5;
  k.cy = sy * (k.cy + 0.5) - 0.5;
  k.width = new_width;
  k.height = new_height;
}

template <typename GetSrc, typename SetDst>
void nn_copy(int src_w, int src_h, int dst_w, int dst_h, GetSrc get, SetDst set) {
  for (int r = 0; r < dst_h; ++r) {
    int sr = static_cast<int>((r + 0.5) * src_h / dst_h);
    sr = std::clamp(sr, 0, src_h - 1);
    for (int c = 0; c < dst_w; ++c) {
      int sc = static_cast<int>((c + 0.5) * src_w / dst_w);
      sc = std::clamp(sc, 0, src_w - 1);
      set(r, c, get(sr, sc));
    }
  }
}

}  // namespace

DepthMap resize_nearest(const DepthMap& d, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0) {
    throw std::invalid_argument("resize_nearest: size must be positive");
  }
  DepthMap out;
  out.intrinsics = d.intrinsics;
  rescale_intrinsics(out.intrinsics, new_width, new_height);
  out.data.resize(static_cast<size_t>(new_width) * new_height);
  nn_copy(
      d.width(), d.height(), new_width, new_height,
      [&](int r, int c) { return d.at(r, c); },
      [&](int r, int c, float v) { out.data[static_cast<size_t>(r) * new_width + c] = v; });
  return out;
}

Raster resize_nearest(const Raster& r, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0) {
    throw std::invalid_argument("resize_nearest: size must be positive");
  }
  Raster out = Raster::zeros(new_width, new_height);
  nn_copy(
      r.width, r.height, new_width, new_height,
      [&](int rr, int cc) { return r.at(rr, cc); },
      [&](int rr, int cc, float v) { out.at(rr, cc) = v; });
  return out;
}

namespace {

constexpr char kRasterMagic[4] = {'D', 'P', 'R', '1'};

void put_u32(std::string& s, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}

uint32_t get_u32(const std::string& s, size_t off) {
  uint32_t v;
  std::memcpy(&v, s.data() + off, 4);
  return v;
}

}  // namespace

void write_raster_file(const std::filesystem::path& path, int width, int height,
                       std::span<const float> data) {
  if (data.size() != static_cast<size_t>(width) * height) {
    throw std::invalid_argument("write_raster_file: size mismatch");
  }
  std::string bytes;
  bytes.reserve(16 + data.size() * 4);
  bytes.append(kRasterMagic, 4);
  put_u32(bytes, static_cast<uint32_t>(width));
  put_u32(bytes, static_cast<uint32_t>(height));
  put_u32(bytes, 0);  // reserved
  bytes.append(reinterpret_cast<const char*>(data.data()), data.size() * 4);
  write_file_atomic(path, bytes);
}

Raster read_raster_file(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kRasterMagic, 4) != 0) {
    throw DataError("bad raster header: " + path.string());
  }
  Raster out;
  out.width = static_cast<int>(get_u32(bytes, 4));
  out.height = static_cast<int>(get_u32(bytes, 8));
  if (out.width <= 0 || out.height <= 0) {
    throw DataError("bad raster dimensions: " + path.string());
  }
  const size_t expect = static_cast<size_t>(out.width) * out.height;
  if (bytes.size() != 16 + expect * 4) {
    throw DataError("truncated raster: " + path.string());
  }
  out.data.resize(expect);
  std::memcpy(out.data.data(), bytes.data() + 16, expect * 4);
  return out;
}

void save_depth(const DepthMap& d, const std::filesystem::path& path) {
  write_raster_file(path, d.width(), d.height(), d.data);
}

DepthMap load_depth(const std::filesystem::path& path, const Intrinsics& k) {
  const Raster r = read_raster_file(path);
  if (r.width != k.width || r.height != k.height) {
    throw DataError("raster size does not match intrinsics: " + path.string());
  }
  DepthMap d;
  d.intrinsics = k;
  d.data = r.data;
  return d;
}

}  // namespace calibprobe
