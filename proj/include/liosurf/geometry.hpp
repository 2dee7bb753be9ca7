#pragma once

// SO(3)/SE(3) primitives: quaternion rotations, rigid poses, twists with
// [rho, phi] ordering (translation first), exp/log maps, adjoint and the
// first-order inverse right Jacobian used by the pose-graph solver.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace liosurf::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline constexpr double kSmallAngle = 1e-8;

inline Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

/// Unit quaternion with canonical sign (w >= 0), renormalized on construction.
class Rotation {
 public:
  Rotation() : q_(1.0, 0.0, 0.0, 0.0) {}

  explicit Rotation(const Eigen::Quaterniond& q) : q_(q) { canonicalize(); }

  Rotation(double w, double x, double y, double z) : q_(w, x, y, z) { canonicalize(); }

  static Rotation identity() { return Rotation(); }

  static Rotation from_matrix(const Mat3& m) { return Rotation(Eigen::Quaterniond(m)); }

  const Eigen::Quaterniond& quaternion() const { return q_; }
  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }

  Mat3 matrix() const { return q_.toRotationMatrix(); }

  Rotation inverse() const { return Rotation(q_.conjugate()); }

  Rotation operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }

  Vec3 operator*(const Vec3& v) const { return q_ * v; }

  /// Rotation angle in [0, pi].
  double angle() const {
    const double nv = q_.vec().norm();
    return 2.0 * std::atan2(nv, std::abs(q_.w()));
  }

  bool is_approx(const Rotation& other, double tol = 1e-9) const {
    return (*this * other.inverse()).angle() < tol;
  }

 private:
  void canonicalize() {
    if (!q_.coeffs().allFinite()) throw std::invalid_argument("Rotation: non-finite quaternion");
    q_.normalize();
    if (q_.w() < 0.0) q_.coeffs() = -q_.coeffs();
  }

  Eigen::Quaterniond q_;
};

/// Element of se(3): [rho, phi], translation block first.
struct Twist {
  Vec3 rho = Vec3::Zero();
  Vec3 phi = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& rho_in, const Vec3& phi_in) : rho(rho_in), phi(phi_in) {}

  static Twist from_vector(const Vec6& v) { return Twist(v.head<3>(), v.tail<3>()); }

  Vec6 vector() const {
    Vec6 v;
    v << rho, phi;
    return v;
  }

  double norm() const { return vector().norm(); }

  Twist operator-() const { return Twist(-rho, -phi); }
};

/// 4x4 matrix form of a twist; vee is its exact inverse.
inline Eigen::Matrix4d se3_hat(const Twist& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = hat(xi.phi);
  m.topRightCorner<3, 1>() = xi.rho;
  return m;
}

inline Twist se3_vee(const Eigen::Matrix4d& m) {
  return Twist(m.topRightCorner<3, 1>(), vee(m.topLeftCorner<3, 3>()));
}

struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose identity() { return Pose(); }

  Pose operator*(const Pose& other) const {
    return Pose(rotation * other.rotation, rotation * other.translation + translation);
  }

  /// Maps a point from the local frame of this pose into its parent frame.
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  Pose inverse() const {
    const Rotation rinv = rotation.inverse();
    return Pose(rinv, -(rinv * translation));
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation.matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  bool is_approx(const Pose& other, double tol = 1e-9) const {
    return rotation.is_approx(other.rotation, tol) &&
           (translation - other.translation).norm() < tol;
  }
};

/// Rodrigues map. Angles below kSmallAngle use the second-order Taylor
/// expansion of the half-angle terms.
inline Rotation so3_exp(const Vec3& phi) {
  if (!phi.allFinite()) throw std::invalid_argument("so3_exp: non-finite input");
  const double theta = phi.norm();
  double w, k;  // q = (w, k * phi)
  if (theta < kSmallAngle) {
    w = 1.0 - theta * theta / 8.0;
    k = 0.5 - theta * theta / 48.0;
  } else {
    w = std::cos(0.5 * theta);
    k = std::sin(0.5 * theta) / theta;
  }
  return Rotation(w, k * phi.x(), k * phi.y(), k * phi.z());
}

inline Vec3 so3_log(const Rotation& r) {
  const Eigen::Quaterniond& q = r.quaternion();  // canonical, w >= 0
  const double nv = q.vec().norm();
  if (nv < kSmallAngle) return 2.0 * q.vec();
  const double theta = 2.0 * std::atan2(nv, q.w());
  return (theta / nv) * q.vec();
}

/// Left Jacobian of SO(3); relates se(3) translation blocks to SE(3) ones.
inline Mat3 so3_left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 px = hat(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * px + (1.0 / 6.0) * px * px;
  }
  const double t2 = theta * theta;
  return Mat3::Identity() + ((1.0 - std::cos(theta)) / t2) * px +
         ((theta - std::sin(theta)) / (t2 * theta)) * px * px;
}

inline Mat3 so3_left_jacobian_inv(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 px = hat(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * px + (1.0 / 12.0) * px * px;
  }
  const double t2 = theta * theta;
  const double c = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * px + c * px * px;
}

inline Pose se3_exp(const Twist& xi) {
  return Pose(so3_exp(xi.phi), so3_left_jacobian(xi.phi) * xi.rho);
}

/// Inverse of se3_exp. Rotation angles within 1e-6 of pi are a domain error.
inline Twist se3_log(const Pose& pose) {
  const Vec3 phi = so3_log(pose.rotation);
  if (phi.norm() >= M_PI - 1e-6) throw std::domain_error("se3_log: rotation angle too close to pi");
  return Twist(so3_left_jacobian_inv(phi) * pose.translation, phi);
}

/// Adjoint of T under [rho, phi] ordering: [[R, t^ R], [0, R]].
inline Mat6 adjoint(const Pose& pose) {
  const Mat3 r = pose.rotation.matrix();
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.topRightCorner<3, 3>() = hat(pose.translation) * r;
  ad.bottomRightCorner<3, 3>() = r;
  return ad;
}

/// First-order inverse right Jacobian on SE(3):
/// I + 1/2 [[phi^, rho^], [0, phi^]] under the [rho, phi] ordering.
inline Mat6 right_jacobian_inv_approx(const Twist& e) {
  Mat6 j = Mat6::Identity();
  const Mat3 px = hat(e.phi);
  j.topLeftCorner<3, 3>() += 0.5 * px;
  j.topRightCorner<3, 3>() = 0.5 * hat(e.rho);
  j.bottomRightCorner<3, 3>() += 0.5 * px;
  return j;
}

}  // namespace liosurf::geom
