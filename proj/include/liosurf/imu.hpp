#pragma once

// Inertial state propagation: direct integration of the IMU kinematics,
// anchor-independent preintegrated deltas (alpha, beta, q), and continuous
// pose interpolation used for scan deskewing.
//
// Discretization: midpoint gyro for the rotation increment, trapezoidal
// accelerometer average for velocity and position. Preintegration uses the
// same stepping, so composing a delta onto an anchor state reproduces the
// direct integration exactly at shared sample boundaries.

#include <liosurf/geometry.hpp>

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

namespace liosurf::imu {

using geom::Pose;
using geom::Rotation;
using geom::Vec3;

struct ImuSample {
  double t = 0.0;  // seconds
  Vec3 accel = Vec3::Zero();  // specific force, body frame, m/s^2
  Vec3 gyro = Vec3::Zero();   // body frame, rad/s
};

struct ImuBias {
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
};

struct NavState {
  Pose pose;
  Vec3 velocity = Vec3::Zero();  // world frame, m/s
};

/// Relative motion over a sample interval, expressed in the body frame of
/// the interval's first sample. Independent of any world-frame anchor.
struct PreintegratedDelta {
  double dt = 0.0;
  Vec3 alpha = Vec3::Zero();  // m
  Vec3 beta = Vec3::Zero();   // m/s
  Rotation rot;
  ImuBias bias_used;
};

struct GravityModel {
  Vec3 g = Vec3(0.0, 0.0, -9.81);  // world frame, m/s^2
};

namespace detail {

inline void check_stream(std::span<const ImuSample> samples) {
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    if (!(samples[i + 1].t > samples[i].t)) {
      throw std::invalid_argument("imu: sample timestamps must be strictly increasing");
    }
  }
}

inline ImuSample lerp(const ImuSample& a, const ImuSample& b, double t) {
  const double u = (t - a.t) / (b.t - a.t);
  ImuSample s;
  s.t = t;
  s.accel = (1.0 - u) * a.accel + u * b.accel;
  s.gyro = (1.0 - u) * a.gyro + u * b.gyro;
  return s;
}

}  // namespace detail

/// One interval step shared by every integration routine in this module.
inline void integrate_step(NavState& state, const ImuSample& s0, const ImuSample& s1,
                           const ImuBias& bias, const Vec3& g) {
  const double dt = s1.t - s0.t;
  const Vec3 gyro_mid = 0.5 * (s0.gyro + s1.gyro) - bias.gyro;
  const Rotation q0 = state.pose.rotation;
  const Rotation q1 = q0 * geom::so3_exp(gyro_mid * dt);
  const Vec3 accel_w = 0.5 * (q0 * (s0.accel - bias.accel) + q1 * (s1.accel - bias.accel)) + g;
  state.pose.translation += state.velocity * dt + 0.5 * accel_w * dt * dt;
  state.velocity += accel_w * dt;
  state.pose.rotation = q1;
}

/// Integrates the stream forward from state_i (taken at the first sample's
/// time). Empty streams leave the state unchanged.
inline NavState integrate_direct(const NavState& state_i, std::span<const ImuSample> samples,
                                 const ImuBias& bias, const GravityModel& gravity) {
  detail::check_stream(samples);
  NavState state = state_i;
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    integrate_step(state, samples[i], samples[i + 1], bias, gravity.g);
  }
  return state;
}

/// Accumulates (alpha, beta, q) in the body frame of the first sample.
inline PreintegratedDelta preintegrate(std::span<const ImuSample> samples, const ImuBias& bias) {
  detail::check_stream(samples);
  PreintegratedDelta delta;
  delta.bias_used = bias;
  if (samples.size() < 2) return delta;

  NavState rel;  // pose/velocity relative to the first sample's body frame, zero gravity
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    integrate_step(rel, samples[i], samples[i + 1], bias, Vec3::Zero());
  }
  delta.dt = samples.back().t - samples.front().t;
  delta.alpha = rel.pose.translation;
  delta.beta = rel.velocity;
  delta.rot = rel.pose.rotation;
  return delta;
}

/// Composes a preintegrated delta onto an anchor state:
///   p_j = p_i + v_i dt + 1/2 g dt^2 + q_i * alpha
///   v_j = v_i + g dt + q_i * beta
///   q_j = q_i * q_delta
/// with g the gravity acceleration vector (negative z up-convention).
inline NavState apply_delta(const NavState& state_i, const PreintegratedDelta& delta,
                            const GravityModel& gravity) {
  const double dt = delta.dt;
  NavState out;
  out.pose.rotation = state_i.pose.rotation * delta.rot;
  out.pose.translation = state_i.pose.translation + state_i.velocity * dt +
                         0.5 * gravity.g * dt * dt + state_i.pose.rotation * delta.alpha;
  out.velocity = state_i.velocity + gravity.g * dt + state_i.pose.rotation * delta.beta;
  return out;
}

/// Precomputed per-sample states for cheap pose queries inside a stream's
/// time span. The anchor state is taken at the first sample's time.
class MotionInterpolator {
 public:
  MotionInterpolator(const NavState& anchor, std::span<const ImuSample> samples,
                     const ImuBias& bias, const GravityModel& gravity)
      : samples_(samples.begin(), samples.end()), bias_(bias), gravity_(gravity) {
    detail::check_stream(samples_);
    if (samples_.empty()) throw std::invalid_argument("MotionInterpolator: empty sample stream");
    states_.reserve(samples_.size());
    states_.push_back(anchor);
    for (std::size_t i = 0; i + 1 < samples_.size(); ++i) {
      NavState s = states_.back();
      integrate_step(s, samples_[i], samples_[i + 1], bias_, gravity_.g);
      states_.push_back(s);
    }
  }

  double start_time() const { return samples_.front().t; }
  double end_time() const { return samples_.back().t; }

  NavState state_at(double t) const {
    if (t < start_time() - 1e-12 || t > end_time() + 1e-12) {
      throw std::domain_error("MotionInterpolator: query time outside sample stream");
    }
    t = std::clamp(t, start_time(), end_time());
    const auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                                     [](double v, const ImuSample& s) { return v < s.t; });
    const std::size_t hi = static_cast<std::size_t>(it - samples_.begin());
    if (hi == 0) return states_.front();
    const std::size_t lo = hi - 1;
    NavState s = states_[lo];
    if (t > samples_[lo].t) {
      // hi is in range here: t <= end_time and t > samples_[lo].t imply lo < size-1
      integrate_step(s, samples_[lo], detail::lerp(samples_[lo], samples_[hi], t), bias_, gravity_.g);
    }
    return s;
  }

  Pose pose_at(double t) const { return state_at(t).pose; }

 private:
  std::vector<ImuSample> samples_;
  ImuBias bias_;
  GravityModel gravity_;
  std::vector<NavState> states_;
};

/// Pose at time t, integrating from the anchor (at the first sample's time)
/// with linear interpolation of the bracketing samples. t must lie within
/// the stream's span.
inline Pose pose_at(double t, const NavState& anchor, std::span<const ImuSample> samples,
                    const ImuBias& bias, const GravityModel& gravity) {
  return MotionInterpolator(anchor, samples, bias, gravity).pose_at(t);
}

}  // namespace liosurf::imu
