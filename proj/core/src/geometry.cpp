#include "calibprobe/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace calibprobe {

namespace {

Eigen::Matrix3d axis_rotation(int axis, double deg) {
  const double a = deg * kDegToRad;
  const double c = std::cos(a);
  const double s = std::sin(a);
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  const int i = (axis + 1) % 3;
  const int j = (axis + 2) % 3;
  r(i, i) = c;
  r(i, j) = -s;
  r(j, i) = s;
  r(j, j) = c;
  return r;
}

}  // namespace

bool EulerPerturbation::finite() const {
  const auto v = to_vector();
  return v.allFinite() && std::abs(roll) <= 180.0 && std::abs(pitch) <= 180.0 &&
         std::abs(yaw) <= 180.0;
}

RigidTransform RigidTransform::rotation_x(double deg) {
  return {axis_rotation(0, deg), Eigen::Vector3d::Zero()};
}
RigidTransform RigidTransform::rotation_y(double deg) {
  return {axis_rotation(1, deg), Eigen::Vector3d::Zero()};
}
RigidTransform RigidTransform::rotation_z(double deg) {
  return {axis_rotation(2, deg), Eigen::Vector3d::Zero()};
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  const Eigen::Matrix3d gram = out.rotation * out.rotation.transpose();
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-13) {
    out.rotation = project_to_so3(out.rotation);
  }
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) {
    return false;
  }
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

Eigen::Matrix3d project_to_so3(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

RigidTransform from_euler(const EulerPerturbation& e) {
  RigidTransform t;
  t.rotation = axis_rotation(2, e.yaw) * axis_rotation(1, e.pitch) *
               axis_rotation(0, e.roll);
  t.translation = Eigen::Vector3d(e.tx, e.ty, e.tz);
  return t;
}

EulerDecomposition decompose_euler(const RigidTransform& t) {
  const Eigen::Matrix3d& r = t.rotation;
  EulerDecomposition out;
  const double sp = -r(2, 0);
  if (std::abs(sp) > 1.0 - 1e-9) {
    out.gimbal_lock = true;
    out.angles.pitch = (sp > 0.0 ? 90.0 : -90.0);
    out.angles.roll = 0.0;
    // at the singularity only yaw -+ roll is observable; fold it into yaw
    out.angles.yaw = std::atan2(-r(0, 1), r(1, 1)) * kRadToDeg;
  } else {
    out.angles.pitch = std::asin(sp) * kRadToDeg;
    out.angles.roll = std::atan2(r(2, 1), r(2, 2)) * kRadToDeg;
    out.angles.yaw = std::atan2(r(1, 0), r(0, 0)) * kRadToDeg;
  }
  out.angles.tx = t.translation.x();
  out.angles.ty = t.translation.y();
  out.angles.tz = t.translation.z();
  return out;
}

EulerPerturbation to_euler(const RigidTransform& t) {
  return decompose_euler(t).angles;
}

EulerPerturbation sample_perturbation(const PerturbRange& range, Rng& rng) {
  EulerPerturbation e;
  const double mt = range.max_translation;
  const double mr = range.max_rotation;
  e.tx = mt > 0.0 ? rng.uniform(-mt, mt) : 0.0;
  e.ty = mt > 0.0 ? rng.uniform(-mt, mt) : 0.0;
  e.tz = mt > 0.0 ? rng.uniform(-mt, mt) : 0.0;
  e.roll = mr > 0.0 ? rng.uniform(-mr, mr) : 0.0;
  e.pitch = mr > 0.0 ? rng.uniform(-mr, mr) : 0.0;
  e.yaw = mr > 0.0 ? rng.uniform(-mr, mr) : 0.0;
  return e;
}

RigidTransform ground_truth_from_perturbation(const RigidTransform& t_init,
                                              const RigidTransform& delta) {
  return t_init * delta.inverse();
}

CalibErrors calib_error(const RigidTransform& pred, const RigidTransform& gt) {
  const RigidTransform rel = gt.inverse() * pred;
  CalibErrors err;
  err.e_t = rel.translation.norm() * 100.0;
  // angle of the relative rotation; atan2 of (sin, cos) stays well-conditioned
  // near zero where acos((trace-1)/2) loses half the working precision
  const double cos_angle = (rel.rotation.trace() - 1.0) * 0.5;
  const Eigen::Vector3d axis_sin(rel.rotation(2, 1) - rel.rotation(1, 2),
                                 rel.rotation(0, 2) - rel.rotation(2, 0),
                                 rel.rotation(1, 0) - rel.rotation(0, 1));
  err.e_r = std::atan2(0.5 * axis_sin.norm(), cos_angle) * kRadToDeg;
  const EulerPerturbation e = to_euler(rel);
  err.x = std::abs(e.tx) * 100.0;
  err.y = std::abs(e.ty) * 100.0;
  err.z = std::abs(e.tz) * 100.0;
  err.roll = std::abs(e.roll);
  err.pitch = std::abs(e.pitch);
  err.yaw = std::abs(e.yaw);
  return err;
}

}  // namespace calibprobe
