#pragma once

// Ground-truth simulator: triangle-soup worlds, piecewise-analytic
// trajectories with exact velocity/acceleration/angular-rate closures,
// ray-cast LiDAR sweeps with per-beam timing, and IMU sample synthesis.
// Everything downstream is verified against this module.

#include <liosurf/features.hpp>
#include <liosurf/geometry.hpp>
#include <liosurf/imu.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace liosurf::sim {

using geom::Pose;
using geom::Rotation;
using geom::Vec3;

struct Triangle {
  Vec3 a, b, c;
};

/// Moller-Trumbore intersection. Returns the ray parameter of the hit.
inline std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir, const Triangle& tri) {
  const Vec3 e1 = tri.b - tri.a;
  const Vec3 e2 = tri.c - tri.a;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-12) return std::nullopt;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = origin - tri.a;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < -1e-12 || u > 1.0 + 1e-12) return std::nullopt;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv_det;
  if (v < -1e-12 || u + v > 1.0 + 1e-12) return std::nullopt;
  const double t = e2.dot(qvec) * inv_det;
  if (t <= 1e-9) return std::nullopt;
  return t;
}

/// Closest distance from a point to a triangle (Ericson's region test).
inline double point_triangle_distance(const Vec3& p, const Triangle& tri) {
  const Vec3 ab = tri.b - tri.a;
  const Vec3 ac = tri.c - tri.a;
  const Vec3 ap = p - tri.a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - tri.a).norm();

  const Vec3 bp = p - tri.b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - tri.b).norm();

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (p - (tri.a + v * ab)).norm();
  }

  const Vec3 cp = p - tri.c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - tri.c).norm();

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (p - (tri.a + w * ac)).norm();
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (tri.b + w * (tri.c - tri.b))).norm();
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return (p - (tri.a + ab * v + ac * w)).norm();
}

class WorldModel {
 public:
  const std::vector<Triangle>& triangles() const { return triangles_; }

  void add_triangle(const Triangle& t) { triangles_.push_back(t); }

  /// Rectangle spanned by two edge vectors from a corner.
  void add_rect(const Vec3& corner, const Vec3& edge_u, const Vec3& edge_v) {
    triangles_.push_back({corner, corner + edge_u, corner + edge_u + edge_v});
    triangles_.push_back({corner, corner + edge_u + edge_v, corner + edge_v});
  }

  void add_box(const Vec3& lo, const Vec3& hi) {
    const Vec3 dx(hi.x() - lo.x(), 0, 0), dy(0, hi.y() - lo.y(), 0), dz(0, 0, hi.z() - lo.z());
    add_rect(lo, dx, dy);                       // bottom
    add_rect(lo + dz, dy, dx);                  // top
    add_rect(lo, dy, dz);                       // x = lo.x
    add_rect(lo + dx, dz, dy);                  // x = hi.x
    add_rect(lo, dz, dx);                       // y = lo.y
    add_rect(lo + dy, dx, dz);                  // y = hi.y
  }

  /// Icosphere tessellation.
  void add_sphere(const Vec3& center, double radius, int subdivisions = 2) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    std::vector<std::array<int, 3>> f = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (auto& p : v) p.normalize();
    for (int s = 0; s < subdivisions; ++s) {
      std::vector<std::array<int, 3>> next;
      for (const auto& tri : f) {
        const int i0 = tri[0], i1 = tri[1], i2 = tri[2];
        auto midpoint = [&](int a, int b) {
          v.push_back(((v[a] + v[b]) * 0.5).normalized());
          return static_cast<int>(v.size() - 1);
        };
        const int m01 = midpoint(i0, i1), m12 = midpoint(i1, i2), m02 = midpoint(i0, i2);
        next.push_back({i0, m01, m02});
        next.push_back({i1, m12, m01});
        next.push_back({i2, m02, m12});
        next.push_back({m01, m12, m02});
      }
      f = std::move(next);
    }
    for (const auto& tri : f) {
      triangles_.push_back({center + radius * v[tri[0]], center + radius * v[tri[1]],
                            center + radius * v[tri[2]]});
    }
  }

  /// Nearest intersection along a ray, if any, within max_range.
  std::optional<double> cast_ray(const Vec3& origin, const Vec3& dir, double max_range) const {
    std::optional<double> best;
    for (const Triangle& tri : triangles_) {
      if (const auto t = ray_triangle(origin, dir, tri)) {
        if (*t <= max_range && (!best || *t < *best)) best = *t;
      }
    }
    return best;
  }

  double distance_to(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Triangle& tri : triangles_) best = std::min(best, point_triangle_distance(p, tri));
    return best;
  }

 private:
  std::vector<Triangle> triangles_;
};

struct TrajectorySample {
  Pose pose;
  Vec3 velocity_w = Vec3::Zero();
  Vec3 accel_w = Vec3::Zero();
  Vec3 gyro_body = Vec3::Zero();
};

class TrajectoryPiece {
 public:
  virtual ~TrajectoryPiece() = default;
  virtual double duration() const = 0;
  virtual TrajectorySample sample(double t_local) const = 0;
};

/// Constant rotation, quadratic position: p(t) = p0 + v0 t + a t^2 / 2.
class LinePiece : public TrajectoryPiece {
 public:
  LinePiece(const Pose& start, const Vec3& velocity, const Vec3& accel, double duration)
      : start_(start), v0_(velocity), a_(accel), duration_(duration) {}

  double duration() const override { return duration_; }

  TrajectorySample sample(double t) const override {
    TrajectorySample s;
    s.pose.rotation = start_.rotation;
    s.pose.translation = start_.translation + v0_ * t + 0.5 * a_ * t * t;
    s.velocity_w = v0_ + a_ * t;
    s.accel_w = a_;
    return s;
  }

 private:
  Pose start_;
  Vec3 v0_, a_;
  double duration_;
};

/// Horizontal circular arc with tangent-aligned heading.
class ArcPiece : public TrajectoryPiece {
 public:
  ArcPiece(const Vec3& center, double radius, double start_angle, double angular_rate,
           double duration)
      : center_(center), radius_(radius), theta0_(start_angle), omega_(angular_rate),
        duration_(duration) {}

  double duration() const override { return duration_; }

  TrajectorySample sample(double t) const override {
    const double theta = theta0_ + omega_ * t;
    const double yaw = theta + (omega_ >= 0.0 ? M_PI / 2.0 : -M_PI / 2.0);
    TrajectorySample s;
    s.pose.translation = center_ + radius_ * Vec3(std::cos(theta), std::sin(theta), 0.0);
    s.pose.rotation = geom::so3_exp(Vec3(0.0, 0.0, yaw));
    s.velocity_w = radius_ * omega_ * Vec3(-std::sin(theta), std::cos(theta), 0.0);
    s.accel_w = -radius_ * omega_ * omega_ * Vec3(std::cos(theta), std::sin(theta), 0.0);
    s.gyro_body = Vec3(0.0, 0.0, omega_);
    return s;
  }

 private:
  Vec3 center_;
  double radius_, theta0_, omega_, duration_;
};

/// Fixed position, yaw(t) = yaw0 + rate t + amp sin(2 pi freq t).
class SpinPiece : public TrajectoryPiece {
 public:
  SpinPiece(const Vec3& position, double yaw0, double rate, double duration,
            double osc_amplitude = 0.0, double osc_freq = 0.0)
      : position_(position), yaw0_(yaw0), rate_(rate), duration_(duration),
        amp_(osc_amplitude), freq_(osc_freq) {}

  double duration() const override { return duration_; }

  TrajectorySample sample(double t) const override {
    const double w = 2.0 * M_PI * freq_;
    TrajectorySample s;
    s.pose.translation = position_;
    s.pose.rotation = geom::so3_exp(Vec3(0.0, 0.0, yaw0_ + rate_ * t + amp_ * std::sin(w * t)));
    s.gyro_body = Vec3(0.0, 0.0, rate_ + amp_ * w * std::cos(w * t));
    return s;
  }

 private:
  Vec3 position_;
  double yaw0_, rate_, duration_, amp_, freq_;
};

/// Gerono-style figure eight with tangent heading:
/// p(t) = c + (A sin wt, B sin 2wt, 0).
class FigureEightPiece : public TrajectoryPiece {
 public:
  FigureEightPiece(const Vec3& center, double amp_x, double amp_y, double omega, double duration)
      : center_(center), ax_(amp_x), by_(amp_y), w_(omega), duration_(duration) {}

  double duration() const override { return duration_; }

  TrajectorySample sample(double t) const override {
    const double s1 = std::sin(w_ * t), c1 = std::cos(w_ * t);
    const double s2 = std::sin(2.0 * w_ * t), c2 = std::cos(2.0 * w_ * t);
    TrajectorySample s;
    s.pose.translation = center_ + Vec3(ax_ * s1, by_ * s2, 0.0);
    s.velocity_w = Vec3(ax_ * w_ * c1, 2.0 * by_ * w_ * c2, 0.0);
    s.accel_w = Vec3(-ax_ * w_ * w_ * s1, -4.0 * by_ * w_ * w_ * s2, 0.0);
    const double vx = s.velocity_w.x(), vy = s.velocity_w.y();
    const double speed2 = vx * vx + vy * vy;
    s.pose.rotation = geom::so3_exp(Vec3(0.0, 0.0, std::atan2(vy, vx)));
    s.gyro_body = Vec3(0.0, 0.0, (vx * s.accel_w.y() - vy * s.accel_w.x()) / speed2);
    return s;
  }

 private:
  Vec3 center_;
  double ax_, by_, w_, duration_;
};

/// Sequential composition of analytic pieces.
class Trajectory {
 public:
  void add(std::unique_ptr<TrajectoryPiece> piece) {
    starts_.push_back(duration_);
    duration_ += piece->duration();
    pieces_.push_back(std::move(piece));
  }

  double duration() const { return duration_; }
  bool empty() const { return pieces_.empty(); }

  TrajectorySample sample(double t) const {
    if (pieces_.empty()) throw std::out_of_range("Trajectory: no pieces");
    if (t < -1e-9 || t > duration_ + 1e-9) throw std::out_of_range("Trajectory: time outside duration");
    t = std::clamp(t, 0.0, duration_);
    std::size_t i = pieces_.size() - 1;
    while (i > 0 && t < starts_[i]) --i;
    return pieces_[i]->sample(t - starts_[i]);
  }

  Pose pose(double t) const { return sample(t).pose; }

 private:
  std::vector<std::unique_ptr<TrajectoryPiece>> pieces_;
  std::vector<double> starts_;
  double duration_ = 0.0;
};

/// Rounded-rectangle loop in the z = height plane: ramp from rest, straight
/// edges at constant speed, quarter-circle corners, ending exactly at the
/// start point with the starting heading.
inline Trajectory make_loop_trajectory(double width, double height, double corner_radius,
                                       double speed, double ramp_time, double z) {
  const double lx = width - 2.0 * corner_radius;
  const double ly = height - 2.0 * corner_radius;
  const double ramp_dist = 0.5 * speed * ramp_time;
  if (lx <= 0.0 || ly <= 0.0) throw std::invalid_argument("loop: corner radius too large");
  if (ramp_dist >= lx) throw std::invalid_argument("loop: ramp longer than first edge");

  Trajectory traj;
  const double omega = speed / corner_radius;
  const double quarter = (M_PI / 2.0) / omega;
  const Vec3 x_axis(1, 0, 0), y_axis(0, 1, 0);

  Pose start(Rotation::identity(), Vec3(-lx / 2.0, -height / 2.0, z));
  traj.add(std::make_unique<LinePiece>(start, Vec3::Zero(), (speed / ramp_time) * x_axis, ramp_time));

  Pose after_ramp = start;
  after_ramp.translation += ramp_dist * x_axis;
  traj.add(std::make_unique<LinePiece>(after_ramp, speed * x_axis, Vec3::Zero(), (lx - ramp_dist) / speed));

  traj.add(std::make_unique<ArcPiece>(Vec3(lx / 2.0, -height / 2.0 + corner_radius, z), corner_radius,
                                      -M_PI / 2.0, omega, quarter));

  Pose east(geom::so3_exp(Vec3(0, 0, M_PI / 2.0)), Vec3(width / 2.0, -height / 2.0 + corner_radius, z));
  traj.add(std::make_unique<LinePiece>(east, speed * y_axis, Vec3::Zero(), ly / speed));

  traj.add(std::make_unique<ArcPiece>(Vec3(lx / 2.0, height / 2.0 - corner_radius, z), corner_radius,
                                      0.0, omega, quarter));

  Pose north(geom::so3_exp(Vec3(0, 0, M_PI)), Vec3(lx / 2.0, height / 2.0, z));
  traj.add(std::make_unique<LinePiece>(north, -speed * x_axis, Vec3::Zero(), lx / speed));

  traj.add(std::make_unique<ArcPiece>(Vec3(-lx / 2.0, height / 2.0 - corner_radius, z), corner_radius,
                                      M_PI / 2.0, omega, quarter));

  Pose west(geom::so3_exp(Vec3(0, 0, 3.0 * M_PI / 2.0)), Vec3(-width / 2.0, height / 2.0 - corner_radius, z));
  traj.add(std::make_unique<LinePiece>(west, -speed * y_axis, Vec3::Zero(), ly / speed));

  traj.add(std::make_unique<ArcPiece>(Vec3(-lx / 2.0, -height / 2.0 + corner_radius, z), corner_radius,
                                      M_PI, omega, quarter));
  return traj;
}

struct SensorSpec {
  int rings = 16;
  int points_per_ring = 512;
  double vertical_fov_deg = 30.0;
  double max_range = 60.0;
  double scan_period = 0.1;   // seconds
  double range_sigma = 0.0;   // meters
  double imu_rate = 200.0;    // Hz
};

/// One sweep starting at scan_start. Each column is cast from the sensor
/// pose at its own emission time; azimuth sweeps 2 pi over the period and
/// maps linearly to rel_time. Misses are dropped. Points are in the sensor
/// frame of their emission time; the frame is stamped at scan end.
inline feat::LidarFrame raycast_scan(const WorldModel& world, const Trajectory& traj,
                                     double scan_start, const SensorSpec& spec,
                                     std::uint64_t seed) {
  feat::LidarFrame frame;
  frame.stamp = scan_start + spec.scan_period;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double vfov = spec.vertical_fov_deg * M_PI / 180.0;

  for (int ring = 0; ring < spec.rings; ++ring) {
    const double elev = spec.rings > 1 ? -vfov / 2.0 + vfov * ring / (spec.rings - 1) : 0.0;
    const double ce = std::cos(elev), se = std::sin(elev);
    for (int col = 0; col < spec.points_per_ring; ++col) {
      const double rel = static_cast<double>(col) / spec.points_per_ring;
      const Pose pose = traj.pose(scan_start + rel * spec.scan_period);
      const double azim = 2.0 * M_PI * rel;
      const Vec3 dir_sensor(ce * std::cos(azim), ce * std::sin(azim), se);
      const Vec3 dir_world = pose.rotation * dir_sensor;
      const auto hit = world.cast_ray(pose.translation, dir_world, spec.max_range);
      if (!hit) continue;
      double range = *hit;
      if (spec.range_sigma > 0.0) range += spec.range_sigma * noise(rng);
      if (range <= 1e-3) continue;
      frame.points.push_back({dir_sensor * range, ring, rel});
    }
  }
  return frame;
}

/// Inverse of the imu module's measurement model, evaluated on the
/// trajectory's analytic derivatives:
///   accel = R^T (a_w - g) + bias + noise,  gyro = omega_body + bias + noise.
inline std::vector<imu::ImuSample> synthesize_imu(const Trajectory& traj, double t0, double t1,
                                                  double rate, const imu::ImuBias& bias,
                                                  const imu::GravityModel& gravity,
                                                  double accel_sigma, double gyro_sigma,
                                                  std::uint64_t seed) {
  if (rate <= 0.0) throw std::invalid_argument("synthesize_imu: rate must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<imu::ImuSample> out;
  const int n = static_cast<int>(std::floor((t1 - t0) * rate + 1e-9));
  out.reserve(n + 1);
  for (int k = 0; k <= n; ++k) {
    const double t = t0 + k / rate;
    const TrajectorySample s = traj.sample(t);
    imu::ImuSample m;
    m.t = t;
    m.accel = s.pose.rotation.inverse() * (s.accel_w - gravity.g) + bias.accel;
    m.gyro = s.gyro_body + bias.gyro;
    if (accel_sigma > 0.0) m.accel += accel_sigma * Vec3(noise(rng), noise(rng), noise(rng));
    if (gyro_sigma > 0.0) m.gyro += gyro_sigma * Vec3(noise(rng), noise(rng), noise(rng));
    out.push_back(m);
  }
  return out;
}

inline std::vector<Pose> ground_truth_poses(const Trajectory& traj, std::span<const double> stamps) {
  std::vector<Pose> poses;
  poses.reserve(stamps.size());
  for (double t : stamps) poses.push_back(traj.pose(t));
  return poses;
}

}  // namespace liosurf::sim
