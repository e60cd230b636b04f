#pragma once

#include <Eigen/Core>

#include "calibprobe/rng.hpp"

namespace calibprobe {

constexpr double kDegToRad = 0.017453292519943295;
constexpr double kRadToDeg = 57.29577951308232;

/// A calibration perturbation in Euler form. Angles are degrees, translations
/// meters. The rotation convention everywhere is intrinsic
/// Rz(yaw) * Ry(pitch) * Rx(roll).
struct EulerPerturbation {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double tz = 0.0;

  /// Component order [tx, ty, tz, roll, pitch, yaw], matching report columns.
  Eigen::Matrix<double, 6, 1> to_vector() const {
    Eigen::Matrix<double, 6, 1> v;
    v << tx, ty, tz, roll, pitch, yaw;
    return v;
  }
  static EulerPerturbation from_vector(const Eigen::Matrix<double, 6, 1>& v) {
    return EulerPerturbation{v[3], v[4], v[5], v[0], v[1], v[2]};
  }
  bool finite() const;
};

/// Uniform sampling box for perturbations: translations in meters, rotations
/// in degrees. Zero ranges are allowed and produce degenerate (all-zero)
/// draws.
struct PerturbRange {
  double max_translation = 0.0;
  double max_rotation = 0.0;
  bool valid() const {
    return max_translation >= 0.0 && max_rotation >= 0.0 &&
           std::isfinite(max_translation) && std::isfinite(max_rotation);
  }
};

/// Error tuple reported in the result tables: magnitudes plus per-axis
/// absolute components. Translations in centimeters, rotations in degrees.
struct CalibErrors {
  double e_t = 0.0;
  double e_r = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;

  Eigen::Matrix<double, 8, 1> to_vector() const {
    Eigen::Matrix<double, 8, 1> v;
    v << e_t, e_r, x, y, z, roll, pitch, yaw;
    return v;
  }
  static CalibErrors from_vector(const Eigen::Matrix<double, 8, 1>& v) {
    return CalibErrors{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
  }
};

/// SE(3) element stored as rotation matrix + translation vector.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(double x, double y, double z) {
    RigidTransform t;
    t.translation = Eigen::Vector3d(x, y, z);
    return t;
  }
  static RigidTransform rotation_x(double deg);
  static RigidTransform rotation_y(double deg);
  static RigidTransform rotation_z(double deg);

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
  /// Composition a*b applies b first. Re-orthonormalizes when accumulated
  /// round-off pushes the rotation off SO(3) beyond 1e-13 per entry.
  RigidTransform operator*(const RigidTransform& other) const;
  RigidTransform inverse() const;

  Eigen::Matrix4d matrix() const;
  bool is_valid(double tol = 1e-12) const;
};

/// Nearest rotation matrix in Frobenius norm (polar projection via SVD).
Eigen::Matrix3d project_to_so3(const Eigen::Matrix3d& m);

RigidTransform from_euler(const EulerPerturbation& e);

/// Euler decomposition under the Rz*Ry*Rx convention. gimbal_lock is set when
/// |sin(pitch)| > 1 - 1e-9, where roll/yaw split is no longer unique (roll is
/// then fixed to zero by convention).
struct EulerDecomposition {
  EulerPerturbation angles;
  bool gimbal_lock = false;
};
EulerDecomposition decompose_euler(const RigidTransform& t);
EulerPerturbation to_euler(const RigidTransform& t);

/// Draw order is tx, ty, tz, roll, pitch, yaw; each uniform in +-max.
EulerPerturbation sample_perturbation(const PerturbRange& range, Rng& rng);

/// T_gt = T_init * delta^{-1}: the ground-truth extrinsic paired with a
/// point cloud that was de-calibrated by delta.
RigidTransform ground_truth_from_perturbation(const RigidTransform& t_init,
                                              const RigidTransform& delta);

/// Relative-error metrics of pred against gt, computed from gt^{-1} * pred.
CalibErrors calib_error(const RigidTransform& pred, const RigidTransform& gt);

}  // namespace calibprobe
