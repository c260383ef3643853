#pragma once

#include <Eigen/Dense>

namespace mesch {

// Quaternion convention: scalar-first [qs, qx, qy, qz], Hamilton product,
// world-from-body rotation.

/// Skew-symmetric matrix such that hat(v) * w == v.cross(w).
inline Eigen::Matrix3d hat(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m <<    0.0, -v(2),  v(1),
        v(2),   0.0, -v(0),
       -v(1),  v(0),   0.0;
  return m;
}

/// Embedding of a 3-vector as a pure quaternion (zero scalar part).
inline Eigen::Matrix<double, 4, 3> quat_embed() {
  Eigen::Matrix<double, 4, 3> h = Eigen::Matrix<double, 4, 3>::Zero();
  h.block<3, 3>(1, 0).setIdentity();
  return h;
}

/// Left-multiplication matrix: quat_left(q) * p == q (x) p. The product is
/// bilinear, so the map is exact for non-unit quaternions too (integrators
/// pass slightly drifted attitudes through here).
inline Eigen::Matrix4d quat_left(const Eigen::Vector4d& q) {
  const double qs = q(0);
  const Eigen::Vector3d qv = q.tail<3>();
  Eigen::Matrix4d L;
  L(0, 0) = qs;
  L.block<1, 3>(0, 1) = -qv.transpose();
  L.block<3, 1>(1, 0) = qv;
  L.block<3, 3>(1, 1) = qs * Eigen::Matrix3d::Identity() + hat(qv);
  return L;
}

/// Hamilton product q1 (x) q2, scalar-first.
inline Eigen::Vector4d quat_mul(const Eigen::Vector4d& q1,
                                const Eigen::Vector4d& q2) {
  return quat_left(q1) * q2;
}

/// World-from-body rotation matrix of a unit quaternion.
inline Eigen::Matrix3d quat_rotm(const Eigen::Vector4d& q) {
  const double qs = q(0);
  const Eigen::Vector3d qv = q.tail<3>();
  return Eigen::Matrix3d::Identity() + 2.0 * qs * hat(qv) +
         2.0 * hat(qv) * hat(qv);
}

/// Attitude Jacobian (quaternion tangent map) G(q) = L(q) H, 4x3.
inline Eigen::Matrix<double, 4, 3> attitude_jacobian(
    const Eigen::Vector4d& q) {
  return quat_left(q) * quat_embed();
}

}  // namespace mesch
