#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "calibprobe/geometry.hpp"
#include "calibprobe/rng.hpp"
#include "calibprobe/sensor.hpp"

namespace calibprobe {

/// One 2D-3D match: a LiDAR-frame point and its image pixel.
struct Correspondence {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  double weight = 1.0;
};

/// Sum of squared weighted pixel residuals of the correspondences under pose
/// t. Points at or behind the image plane contribute a large penalty.
double reprojection_cost(const RigidTransform& t,
                         std::span<const Correspondence> corr,
                         const Intrinsics& k);

/// Closed-form pose from >= 4 non-coplanar correspondences via the
/// control-point formulation: barycentric coordinates, null space of the
/// 2n x 12 system, and beta-case selection (N = 1..3) by reprojection score.
/// The returned rotation is polar-projected onto SO(3).
/// Throws DegeneracyError for rank-deficient configurations.
RigidTransform epnp(std::span<const Correspondence> corr, const Intrinsics& k);

struct RefineResult {
  RigidTransform pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Cost after each accepted step, starting with the initial cost.
  std::vector<double> cost_trace;
};

/// Gauss-Newton minimization of the reprojection cost with step-halving
/// backtracking; the accepted cost sequence never increases. Rotation is
/// updated through a local 3-parameter increment.
RefineResult refine(const RigidTransform& t0,
                    std::span<const Correspondence> corr, const Intrinsics& k,
                    int max_iters = 50);

struct RansacResult {
  RigidTransform pose;
  std::vector<bool> inliers;
  int inlier_count = 0;
};

/// Hypothesize-and-verify with epnp over pre-drawn subsets, consensus by
/// pixel reprojection threshold, final refine on the best inlier set.
/// Deterministic per rng seed. Throws DegeneracyError when no hypothesis
/// reaches 6 inliers.
RansacResult ransac_pnp(std::span<const Correspondence> corr,
                        const Intrinsics& k, double threshold_px, int iters,
                        Rng& rng);

/// Text interchange: one "X Y Z u v [w]" record per line.
std::vector<Correspondence> read_correspondences(const std::filesystem::path& path);
void write_correspondences(const std::filesystem::path& path,
                           std::span<const Correspondence> corr);

}  // namespace calibprobe
