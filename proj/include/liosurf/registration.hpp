#pragma once

// Scan-to-map registration: point-to-line and point-to-plane residuals,
// exact k-NN correspondence search against a local feature map, and a
// damped Gauss-Newton solver over a left-multiplied pose increment.

#include <liosurf/features.hpp>
#include <liosurf/geometry.hpp>
#include <liosurf/kdtree.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace liosurf::reg {

using geom::Mat3;
using geom::Pose;
using geom::Vec3;
using geom::Vec6;
using Vec4 = Eigen::Vector4d;
using RowVec6 = Eigen::Matrix<double, 1, 6>;

/// Point-to-line distance: || (x - a) x (x - b) || / || a - b ||.
inline double edge_residual(const Vec3& point, const Vec3& anchor_a, const Vec3& anchor_b) {
  const Vec3 line = anchor_a - anchor_b;
  const double len = line.norm();
  if (len <= 1e-6) throw std::invalid_argument("edge_residual: coincident line anchors");
  return (point - anchor_a).cross(point - anchor_b).norm() / len;
}

/// Signed point-to-plane distance; the coefficients need not be normalized.
inline double plane_residual(const Vec3& point, const Vec4& coeffs) {
  const double norm = coeffs.head<3>().norm();
  if (norm <= 1e-12) throw std::invalid_argument("plane_residual: zero plane normal");
  return (coeffs.head<3>().dot(point) + coeffs.w()) / norm;
}

/// Least-squares plane through >=3 points via the smallest principal
/// direction. Rejects rank-deficient sets and fits with any point farther
/// than max_inlier_distance from the plane.
inline std::optional<Vec4> fit_plane(std::span<const Vec3> points,
                                     double max_inlier_distance = 0.2) {
  if (points.size() < 3) return std::nullopt;
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Mat3 scatter = Mat3::Zero();
  for (const Vec3& p : points) scatter += (p - centroid) * (p - centroid).transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  if (eig.eigenvalues()(1) <= 1e-9 * std::max(eig.eigenvalues()(2), 1e-12)) {
    return std::nullopt;  // collinear or coincident
  }
  Vec4 coeffs;
  coeffs.head<3>() = eig.eigenvectors().col(0).normalized();
  coeffs.w() = -coeffs.head<3>().dot(centroid);
  for (const Vec3& p : points) {
    if (std::abs(plane_residual(p, coeffs)) > max_inlier_distance) return std::nullopt;
  }
  return coeffs;
}

struct EdgeCorrespondence {
  Vec3 point_sensor;  // query point in the scan frame
  Vec3 point_world;   // query transformed by the search pose
  Vec3 anchor_a;
  Vec3 anchor_b;
};

struct PlaneCorrespondence {
  Vec3 point_sensor;
  Vec3 point_world;
  Vec4 coeffs;  // unit normal
};

struct Correspondences {
  std::vector<EdgeCorrespondence> edges;
  std::vector<PlaneCorrespondence> planes;
  std::size_t size() const { return edges.size() + planes.size(); }
};

/// World-frame feature map over a sliding window of keyframes. The k-NN
/// indices are rebuilt by build() after every insertion batch.
class LocalFeatureMap {
 public:
  void clear() {
    edge_points_.clear();
    edge_rings_.clear();
    planar_points_.clear();
    built_ = false;
  }

  void add(const feat::FeatureSet& features, const Pose& pose) {
    for (const auto& p : features.edges) {
      edge_points_.push_back(pose * p.position);
      edge_rings_.push_back(p.ring);
    }
    for (const auto& p : features.planars) planar_points_.push_back(pose * p.position);
    built_ = false;
  }

  void build() {
    edge_index_.build(edge_points_);
    planar_index_.build(planar_points_);
    built_ = true;
  }

  bool empty() const { return edge_points_.empty() && planar_points_.empty(); }
  bool built() const { return built_; }
  const std::vector<Vec3>& edge_points() const { return edge_points_; }
  const std::vector<Vec3>& planar_points() const { return planar_points_; }
  int edge_ring(std::size_t i) const { return edge_rings_[i]; }
  const KdTree& edge_index() const { return edge_index_; }
  const KdTree& planar_index() const { return planar_index_; }

 private:
  std::vector<Vec3> edge_points_;
  std::vector<int> edge_rings_;
  std::vector<Vec3> planar_points_;
  KdTree edge_index_;
  KdTree planar_index_;
  bool built_ = false;
};

struct RegistrationParams {
  int max_iterations = 30;
  double initial_lambda = 1e-4;
  double huber_delta = 0.1;       // meters
  double nn_radius = 1.0;         // meters
  double plane_rms_gate = 0.04;   // max RMS of the 5 plane anchors to their fit
  double step_epsilon = 1e-6;     // convergence threshold on ||delta xi||
  double degenerate_eig_ratio = 1e-6;
  std::size_t min_correspondences = 12;
};

/// Edge points match their two nearest map edge points (distinct rings
/// preferred); planar points match a plane fitted to their five nearest
/// map planar points. Matches beyond nn_radius are dropped, as are plane
/// fits whose anchor RMS exceeds plane_rms_gate (mixed-surface guard).
inline Correspondences find_correspondences(const feat::FeatureSet& features,
                                            const LocalFeatureMap& map, const Pose& guess,
                                            double nn_radius = 1.0,
                                            double plane_rms_gate = 0.04) {
  Correspondences out;
  const double r2 = nn_radius * nn_radius;

  if (!map.edge_points().empty()) {
    for (const auto& p : features.edges) {
      const Vec3 world = guess * p.position;
      const auto nn = map.edge_index().knn(world, 4);
      if (nn.empty() || nn[0].squared_distance > r2) continue;
      const std::size_t a = nn[0].index;
      std::size_t b = a;
      for (std::size_t i = 1; i < nn.size(); ++i) {  // prefer a different ring
        if (nn[i].squared_distance > r2) break;
        if (map.edge_ring(nn[i].index) != map.edge_ring(a)) {
          b = nn[i].index;
          break;
        }
        if (b == a) b = nn[i].index;
      }
      if (b == a) continue;
      const Vec3& pa = map.edge_points()[a];
      const Vec3& pb = map.edge_points()[b];
      if ((pa - pb).norm() <= 1e-6) continue;
      out.edges.push_back({p.position, world, pa, pb});
    }
  }

  if (!map.planar_points().empty()) {
    std::vector<Vec3> neighbors;
    for (const auto& p : features.planars) {
      const Vec3 world = guess * p.position;
      const auto nn = map.planar_index().knn(world, 5);
      if (nn.size() < 5 || nn.back().squared_distance > r2) continue;
      neighbors.clear();
      for (const auto& n : nn) neighbors.push_back(map.planar_points()[n.index]);
      const auto coeffs = fit_plane(neighbors);
      if (!coeffs) continue;
      double sq = 0.0;
      for (const Vec3& q : neighbors) {
        const double d = plane_residual(q, *coeffs);
        sq += d * d;
      }
      if (std::sqrt(sq / neighbors.size()) > plane_rms_gate) continue;
      out.planes.push_back({p.position, world, *coeffs});
    }
  }
  return out;
}

/// Residual and its Jacobian w.r.t. a left-multiplied increment on T, with
/// [rho, phi] ordering: d(exp(dxi) T p)/d(dxi) = [I | -(T p)^].
inline void edge_residual_jacobian(const Pose& pose, const EdgeCorrespondence& c, double& residual,
                                   RowVec6& jacobian) {
  const Vec3 w = pose * c.point_sensor;
  const Vec3 line = c.anchor_a - c.anchor_b;
  const Vec3 u = (w - c.anchor_a).cross(w - c.anchor_b);
  const double len = line.norm();
  const double un = u.norm();
  residual = un / len;
  if (un <= 1e-12) {
    jacobian.setZero();
    return;
  }
  const Vec3 grad = line.cross(u) / (un * len);  // d residual / d w
  jacobian.head<3>() = grad.transpose();
  jacobian.tail<3>() = (-grad.transpose() * geom::hat(w)).eval();
}

inline void plane_residual_jacobian(const Pose& pose, const PlaneCorrespondence& c,
                                    double& residual, RowVec6& jacobian) {
  const Vec3 w = pose * c.point_sensor;
  const Vec3 n = c.coeffs.head<3>();
  residual = n.dot(w) + c.coeffs.w();
  jacobian.head<3>() = n.transpose();
  jacobian.tail<3>() = (-n.transpose() * geom::hat(w)).eval();
}

struct RegistrationResult {
  Pose pose;
  int iterations = 0;
  double final_cost = 0.0;  // sum of squared residuals
  bool converged = false;
  bool degenerate = false;
  std::size_t correspondences = 0;
  /// Robust cost before/after each accepted step, on that step's matches.
  std::vector<std::pair<double, double>> steps;
};

namespace detail {

inline double huber_weight(double residual, double delta) {
  const double a = std::abs(residual);
  return a <= delta ? 1.0 : delta / a;
}

inline double huber_cost(double residual, double delta) {
  const double a = std::abs(residual);
  return a <= delta ? residual * residual : delta * (2.0 * a - delta);
}

inline std::vector<double> all_residuals(const Pose& pose, const Correspondences& corr) {
  std::vector<double> r;
  r.reserve(corr.size());
  for (const auto& c : corr.edges) {
    r.push_back(edge_residual(pose * c.point_sensor, c.anchor_a, c.anchor_b));
  }
  for (const auto& c : corr.planes) {
    r.push_back(plane_residual(pose * c.point_sensor, c.coeffs));
  }
  return r;
}

/// Residuals far above the iteration's median are stale or impure matches;
/// trimming them keeps exact data exactly consistent while leaving noisy
/// data untouched.
inline double trim_gate(const std::vector<double>& residuals) {
  std::vector<double> mags(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) mags[i] = std::abs(residuals[i]);
  std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
  return std::max(10.0 * mags[mags.size() / 2], 1e-4);
}

struct NormalEquations {
  Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
  Vec6 g = Vec6::Zero();
  double robust_cost = 0.0;
};

inline NormalEquations build_normal_equations(const Pose& pose, const Correspondences& corr,
                                              const std::vector<char>& keep, double huber_delta) {
  NormalEquations ne;
  double r;
  RowVec6 j;
  std::size_t k = 0;
  auto accumulate = [&](double residual, const RowVec6& row) {
    const double w = huber_weight(residual, huber_delta);
    ne.h += w * row.transpose() * row;
    ne.g += w * row.transpose() * residual;
    ne.robust_cost += huber_cost(residual, huber_delta);
  };
  for (const auto& c : corr.edges) {
    if (keep[k++]) {
      edge_residual_jacobian(pose, c, r, j);
      accumulate(r, j);
    }
  }
  for (const auto& c : corr.planes) {
    if (keep[k++]) {
      plane_residual_jacobian(pose, c, r, j);
      accumulate(r, j);
    }
  }
  return ne;
}

inline double evaluate_robust_cost(const Pose& pose, const Correspondences& corr,
                                   const std::vector<char>& keep, double huber_delta) {
  double cost = 0.0;
  std::size_t k = 0;
  for (const auto& c : corr.edges) {
    if (keep[k++]) {
      cost += huber_cost(edge_residual(pose * c.point_sensor, c.anchor_a, c.anchor_b), huber_delta);
    }
  }
  for (const auto& c : corr.planes) {
    if (keep[k++]) {
      cost += huber_cost(plane_residual(pose * c.point_sensor, c.coeffs), huber_delta);
    }
  }
  return cost;
}

}  // namespace detail

/// Iterates correspondence search, damped normal equations
/// (J^T J + lambda I) dxi = -J^T f, and the left update exp(dxi) * T.
/// Steps that increase the robust cost are rejected with lambda * 10;
/// accepted steps divide lambda by 10. Rank-deficient normal equations
/// flag the result as degenerate/non-converged instead of throwing.
inline RegistrationResult gauss_newton_align(const feat::FeatureSet& features,
                                             const LocalFeatureMap& map, const Pose& initial,
                                             const RegistrationParams& params = {}) {
  RegistrationResult result;
  result.pose = initial;
  double lambda = params.initial_lambda;

  Correspondences corr;
  for (int iter = 0; iter < params.max_iterations; ++iter) {
    result.iterations = iter + 1;
    corr = find_correspondences(features, map, result.pose, params.nn_radius, params.plane_rms_gate);
    result.correspondences = corr.size();
    if (corr.size() < params.min_correspondences) {
      result.converged = false;
      break;
    }

    const std::vector<double> residuals = detail::all_residuals(result.pose, corr);
    const double gate = detail::trim_gate(residuals);
    std::vector<char> keep(residuals.size());
    std::size_t kept = 0;
    for (std::size_t i = 0; i < residuals.size(); ++i) {
      keep[i] = std::abs(residuals[i]) <= gate;
      kept += keep[i];
    }
    if (kept < params.min_correspondences) {
      result.converged = false;
      break;
    }

    const auto ne = detail::build_normal_equations(result.pose, corr, keep, params.huber_delta);

    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(ne.h);
    if (eig.eigenvalues()(0) < params.degenerate_eig_ratio * std::max(eig.eigenvalues()(5), 1e-12)) {
      result.degenerate = true;
      result.converged = false;
      break;
    }

    Eigen::Matrix<double, 6, 6> damped = ne.h;
    damped.diagonal().array() += lambda;
    const Vec6 step = damped.ldlt().solve(-ne.g);
    if (step.norm() < params.step_epsilon) {
      result.converged = true;
      break;
    }

    const Pose trial = geom::se3_exp(geom::Twist::from_vector(step)) * result.pose;
    const double trial_cost = detail::evaluate_robust_cost(trial, corr, keep, params.huber_delta);
    if (trial_cost <= ne.robust_cost) {
      result.pose = trial;
      result.steps.emplace_back(ne.robust_cost, trial_cost);
      lambda = std::max(lambda * 0.1, 1e-12);
    } else {
      lambda *= 10.0;
      if (lambda > 1e8) {
        result.converged = false;
        break;
      }
    }
  }

  corr = find_correspondences(features, map, result.pose, params.nn_radius, params.plane_rms_gate);
  double squared = 0.0;
  for (const auto& c : corr.edges) {
    const double r = edge_residual(result.pose * c.point_sensor, c.anchor_a, c.anchor_b);
    squared += r * r;
  }
  for (const auto& c : corr.planes) {
    const double r = plane_residual(result.pose * c.point_sensor, c.coeffs);
    squared += r * r;
  }
  result.final_cost = squared;
  return result;
}

}  // namespace liosurf::reg
