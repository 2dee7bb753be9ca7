#pragma once

// Shared generators and independent numeric oracles for the test suites.

#include <liosurf/geometry.hpp>

#include <random>

namespace test_helpers {

using liosurf::geom::Mat3;
using liosurf::geom::Mat6;
using liosurf::geom::Pose;
using liosurf::geom::Rotation;
using liosurf::geom::Twist;
using liosurf::geom::Vec3;
using liosurf::geom::Vec6;

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 random_vec3(std::mt19937_64& rng, double scale = 1.0) {
  return Vec3(uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale));
}

inline Vec3 random_unit_vec3(std::mt19937_64& rng) {
  Vec3 v;
  do {
    v = random_vec3(rng);
  } while (v.norm() < 1e-3);
  return v.normalized();
}

inline Rotation random_rotation(std::mt19937_64& rng, double max_angle = 3.0) {
  return liosurf::geom::so3_exp(random_unit_vec3(rng) * uniform(rng, 0.0, max_angle));
}

inline Pose random_pose(std::mt19937_64& rng, double max_angle = 3.0, double max_trans = 5.0) {
  return Pose(random_rotation(rng, max_angle), random_vec3(rng, max_trans));
}

inline Twist random_twist(std::mt19937_64& rng, double rho_scale = 1.0, double phi_scale = 1.0) {
  return Twist(random_vec3(rng, rho_scale), random_unit_vec3(rng) * uniform(rng, 0.0, phi_scale));
}

/// Matrix exponential by power series, run to convergence. Independent of
/// the closed-form Rodrigues path.
inline Mat3 matrix_exp_series(const Mat3& a) {
  Mat3 sum = Mat3::Identity();
  Mat3 term = Mat3::Identity();
  for (int k = 1; k <= 60; ++k) {
    term = (term * a) / static_cast<double>(k);
    sum += term;
    if (term.norm() < 1e-18) break;
  }
  return sum;
}

/// RMS distance of points to their least-squares plane (smallest principal
/// direction of the centered scatter).
inline double plane_fit_rms(const std::vector<Vec3>& points) {
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Mat3 scatter = Mat3::Zero();
  for (const Vec3& p : points) scatter += (p - centroid) * (p - centroid).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  return std::sqrt(std::max(0.0, eig.eigenvalues()(0)) / static_cast<double>(points.size()));
}

/// Exact SE(3) right Jacobian by central differences of
/// log(exp(xi)^-1 * exp(xi + h e_j)).
inline Mat6 numeric_right_jacobian(const Twist& xi, double h = 1e-6) {
  const Pose base = liosurf::geom::se3_exp(xi);
  Mat6 j;
  for (int c = 0; c < 6; ++c) {
    Vec6 dp = xi.vector();
    Vec6 dm = xi.vector();
    dp[c] += h;
    dm[c] -= h;
    const Twist tp = liosurf::geom::se3_log(base.inverse() * liosurf::geom::se3_exp(Twist::from_vector(dp)));
    const Twist tm = liosurf::geom::se3_log(base.inverse() * liosurf::geom::se3_exp(Twist::from_vector(dm)));
    j.col(c) = (tp.vector() - tm.vector()) / (2.0 * h);
  }
  return j;
}

}  // namespace test_helpers
