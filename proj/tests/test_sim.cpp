#include <liosurf/sim.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace liosurf;
using namespace liosurf::sim;
namespace th = test_helpers;

namespace {

Trajectory static_at(const geom::Pose& pose, double duration) {
  Trajectory traj;
  traj.add(std::make_unique<LinePiece>(pose, geom::Vec3::Zero(), geom::Vec3::Zero(), duration));
  return traj;
}

}  // namespace

TEST_CASE("single beam hits an axis-aligned plane", "[sim]") {
  WorldModel world;
  world.add_rect(geom::Vec3(5.0, -10.0, -10.0), geom::Vec3(0.0, 20.0, 0.0), geom::Vec3(0.0, 0.0, 20.0));

  SensorSpec spec;
  spec.rings = 1;
  spec.points_per_ring = 1;
  spec.range_sigma = 0.0;
  const Trajectory traj = static_at(geom::Pose::identity(), 1.0);
  const feat::LidarFrame frame = raycast_scan(world, traj, 0.0, spec, 1);
  REQUIRE(frame.points.size() == 1);
  CHECK((frame.points[0].position - geom::Vec3(5.0, 0.0, 0.0)).norm() < 1e-12);
}

TEST_CASE("targets beyond max range produce no return", "[sim]") {
  WorldModel world;
  world.add_rect(geom::Vec3(100.0, -10.0, -10.0), geom::Vec3(0.0, 20.0, 0.0), geom::Vec3(0.0, 0.0, 20.0));
  SensorSpec spec;
  spec.rings = 1;
  spec.points_per_ring = 1;
  spec.max_range = 50.0;
  const feat::LidarFrame frame = raycast_scan(world, static_at(geom::Pose::identity(), 1.0), 0.0, spec, 1);
  CHECK(frame.points.empty());
}

TEST_CASE("box scan points lie on box faces", "[sim]") {
  WorldModel world;
  world.add_box(geom::Vec3(-4.0, -4.0, -2.0), geom::Vec3(4.0, 4.0, 2.0));
  SensorSpec spec;
  spec.rings = 8;
  spec.points_per_ring = 64;
  spec.range_sigma = 0.0;
  const Trajectory traj = static_at(geom::Pose::identity(), 1.0);
  const feat::LidarFrame frame = raycast_scan(world, traj, 0.0, spec, 3);
  REQUIRE(!frame.points.empty());
  for (const auto& p : frame.points) {
    const geom::Pose pose = traj.pose(frame.stamp - (1.0 - p.rel_time) * spec.scan_period);
    CHECK(world.distance_to(pose * p.position) < 1e-9);
  }
}

TEST_CASE("scan generation is deterministic for a fixed seed", "[sim]") {
  WorldModel world;
  world.add_box(geom::Vec3(-4.0, -4.0, -2.0), geom::Vec3(4.0, 4.0, 2.0));
  SensorSpec spec;
  spec.rings = 4;
  spec.points_per_ring = 64;
  spec.range_sigma = 0.02;
  const Trajectory traj = static_at(geom::Pose::identity(), 1.0);
  const feat::LidarFrame a = raycast_scan(world, traj, 0.0, spec, 99);
  const feat::LidarFrame b = raycast_scan(world, traj, 0.0, spec, 99);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].position == b.points[i].position);
    CHECK(a.points[i].rel_time == b.points[i].rel_time);
    CHECK(a.points[i].ring == b.points[i].ring);
  }
}

TEST_CASE("imu synthesis at rest and in uniform motion", "[sim]") {
  const imu::GravityModel gravity;
  const Trajectory rest = static_at(geom::Pose::identity(), 1.0);
  const auto at_rest = synthesize_imu(rest, 0.0, 1.0, 100.0, {}, gravity, 0.0, 0.0, 1);
  REQUIRE(at_rest.size() == 101);
  for (const auto& s : at_rest) {
    CHECK((s.accel - geom::Vec3(0.0, 0.0, 9.81)).norm() < 1e-12);
    CHECK(s.gyro.norm() < 1e-12);
  }

  Trajectory moving;
  moving.add(std::make_unique<LinePiece>(geom::Pose::identity(), geom::Vec3(2.0, -1.0, 0.5),
                                         geom::Vec3::Zero(), 1.0));
  const auto uniform = synthesize_imu(moving, 0.0, 1.0, 100.0, {}, gravity, 0.0, 0.0, 1);
  for (const auto& s : uniform) {
    CHECK((s.accel - geom::Vec3(0.0, 0.0, 9.81)).norm() < 1e-12);
    CHECK(s.gyro.norm() < 1e-12);
  }
}

TEST_CASE("circular motion produces centripetal acceleration", "[sim]") {
  const double radius = 3.0;
  const double speed = 1.5;
  const double omega = speed / radius;
  Trajectory traj;
  traj.add(std::make_unique<ArcPiece>(geom::Vec3::Zero(), radius, 0.0, omega, 10.0));
  const auto samples = synthesize_imu(traj, 0.0, 10.0, 50.0, {}, imu::GravityModel{}, 0.0, 0.0, 1);
  for (const auto& s : samples) {
    // Remove the gravity reaction, then the in-plane magnitude must be v^2/r.
    const geom::Vec3 in_plane(s.accel.x(), s.accel.y(), 0.0);
    CHECK(std::abs(in_plane.norm() - speed * speed / radius) < 1e-9);
    CHECK(std::abs(s.accel.z() - 9.81) < 1e-12);
    CHECK(std::abs(s.gyro.z() - omega) < 1e-12);
  }
}

TEST_CASE("ground truth poses evaluate analytically", "[sim]") {
  Trajectory line;
  line.add(std::make_unique<LinePiece>(geom::Pose::identity(), geom::Vec3(2.0, 0.0, 0.0),
                                       geom::Vec3::Zero(), 4.0));
  const std::vector<double> stamps = {0.0, 2.0};
  const auto poses = ground_truth_poses(line, stamps);
  CHECK(poses[0].is_approx(geom::Pose::identity(), 1e-12));
  CHECK((poses[1].translation - geom::Vec3(4.0, 0.0, 0.0)).norm() < 1e-12);

  const std::vector<double> bad = {5.0};
  CHECK_THROWS_AS(ground_truth_poses(line, bad), std::out_of_range);
}

TEST_CASE("arc positions match integrated velocity closure", "[sim]") {
  Trajectory traj;
  traj.add(std::make_unique<ArcPiece>(geom::Vec3(1.0, -2.0, 0.5), 2.5, 0.3, 0.8, 2.0));
  // Trapezoid integration of the analytic velocity at 50 kHz.
  const int n = 100000;
  const double h = 2.0 / n;
  geom::Vec3 p = traj.sample(0.0).pose.translation;
  for (int i = 0; i < n; ++i) {
    const geom::Vec3 v0 = traj.sample(i * h).velocity_w;
    const geom::Vec3 v1 = traj.sample((i + 1) * h).velocity_w;
    p += 0.5 * (v0 + v1) * h;
  }
  CHECK((p - traj.sample(2.0).pose.translation).norm() < 1e-9);
}

TEST_CASE("direct integration of synthesized imu tracks ground truth", "[sim]") {
  Trajectory traj;
  traj.add(std::make_unique<FigureEightPiece>(geom::Vec3(0.0, 0.0, 1.0), 6.0, 3.0, 0.5, 10.0));
  const imu::GravityModel gravity;
  const auto samples = synthesize_imu(traj, 0.0, 10.0, 200.0, {}, gravity, 0.0, 0.0, 1);

  imu::NavState state;
  const TrajectorySample start = traj.sample(0.0);
  state.pose = start.pose;
  state.velocity = start.velocity_w;
  const imu::NavState end = integrate_direct(state, samples, {}, gravity);
  CHECK((end.pose.translation - traj.pose(10.0).translation).norm() < 1e-4);
}

TEST_CASE("loop trajectory closes on its start", "[sim]") {
  const Trajectory loop = make_loop_trajectory(17.0, 9.5, 2.0, 2.6, 2.0, 1.2);
  const geom::Pose start = loop.pose(0.0);
  const geom::Pose end = loop.pose(loop.duration());
  CHECK((end.translation - start.translation).norm() < 1e-9);
  CHECK(end.rotation.is_approx(start.rotation, 1e-9));

  // Velocity is continuous across piece boundaries after the ramp.
  for (double t = 2.5; t < loop.duration() - 0.1; t += 0.37) {
    CHECK(std::abs(loop.sample(t).velocity_w.norm() - 2.6) < 1e-9);
  }
}
