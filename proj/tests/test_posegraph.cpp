#include <liosurf/pose_graph.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace liosurf;
using namespace liosurf::graph;
namespace th = test_helpers;

namespace {

/// Edge with a small, controlled error magnitude.
struct RandomEdge {
  geom::Pose pose_i, pose_j, measurement;
  geom::Twist error;
};

RandomEdge make_random_edge(std::mt19937_64& rng, double error_scale) {
  RandomEdge e;
  e.pose_i = th::random_pose(rng, 2.5, 5.0);
  e.pose_j = th::random_pose(rng, 2.5, 5.0);
  const geom::Twist noise(th::random_vec3(rng, error_scale), th::random_vec3(rng, error_scale));
  e.measurement = e.pose_i.inverse() * e.pose_j * geom::se3_exp(-noise);
  e.error = edge_error(e.measurement, e.pose_i, e.pose_j);
  return e;
}

HessianSystem random_spd_system(std::mt19937_64& rng, int blocks) {
  const int dim = 6 * blocks;
  Eigen::MatrixXd m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) m(i, j) = th::uniform(rng, -1.0, 1.0);
  }
  HessianSystem sys;
  sys.h = m.transpose() * m + 0.1 * Eigen::MatrixXd::Identity(dim, dim);
  sys.b = Eigen::VectorXd::NullaryExpr(dim, [&](int) { return th::uniform(rng, -1.0, 1.0); });
  for (int k = 0; k < blocks; ++k) {
    sys.ids.push_back(k);
    sys.block_of[k] = k;
  }
  return sys;
}

}  // namespace

TEST_CASE("edge error closed forms", "[posegraph]") {
  auto rng = th::make_rng(1);
  const geom::Pose ti = th::random_pose(rng);
  const geom::Pose tj = th::random_pose(rng);
  CHECK(edge_error(ti.inverse() * tj, ti, tj).norm() < 1e-9);

  const geom::Twist xi(geom::Vec3(0.4, -0.2, 0.7), geom::Vec3(0.1, 0.3, -0.2));
  const geom::Twist e = edge_error(geom::Pose::identity(), geom::Pose::identity(), geom::se3_exp(xi));
  CHECK((e.vector() - xi.vector()).norm() < 1e-9);
}

TEST_CASE("edge jacobian closed forms", "[posegraph]") {
  auto rng = th::make_rng(2);
  const geom::Pose tj = th::random_pose(rng);
  const auto [a, b] = edge_jacobians(geom::Twist{}, tj);
  const geom::Mat6 ad = geom::adjoint(tj.inverse());
  CHECK((a + ad).norm() < 1e-12);
  CHECK((b - ad).norm() < 1e-12);

  const auto [ai, bi] = edge_jacobians(geom::Twist{}, geom::Pose::identity());
  CHECK((ai + geom::Mat6::Identity()).norm() < 1e-12);
  CHECK((bi - geom::Mat6::Identity()).norm() < 1e-12);
}

TEST_CASE("edge jacobians match central finite differences", "[posegraph]") {
  auto rng = th::make_rng(3);
  const double h = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    const RandomEdge e = make_random_edge(rng, 0.01);
    const auto [a, b] = edge_jacobians(e.error, e.pose_j);

    geom::Mat6 a_num, b_num;
    for (int c = 0; c < 6; ++c) {
      geom::Vec6 d = geom::Vec6::Zero();
      d[c] = h;
      const geom::Pose dp = geom::se3_exp(geom::Twist::from_vector(d));
      const geom::Pose dm = geom::se3_exp(geom::Twist::from_vector(-d));
      a_num.col(c) = (edge_error(e.measurement, dp * e.pose_i, e.pose_j).vector() -
                      edge_error(e.measurement, dm * e.pose_i, e.pose_j).vector()) /
                     (2.0 * h);
      b_num.col(c) = (edge_error(e.measurement, e.pose_i, dp * e.pose_j).vector() -
                      edge_error(e.measurement, e.pose_i, dm * e.pose_j).vector()) /
                     (2.0 * h);
    }
    CHECK((a - a_num).norm() < 1e-4 * a_num.norm());
    CHECK((b - b_num).norm() < 1e-4 * b_num.norm());
  }
}

TEST_CASE("assemble produces zero rhs on consistent graphs", "[posegraph]") {
  auto rng = th::make_rng(4);
  PoseGraph graph;
  std::vector<geom::Pose> poses;
  for (int k = 0; k < 5; ++k) {
    poses.push_back(th::random_pose(rng));
    graph.add_node(k, poses.back(), k == 0);
  }
  for (int k = 0; k + 1 < 5; ++k) {
    graph.add_edge({k, k + 1, poses[k].inverse() * poses[k + 1], geom::Mat6::Identity()});
  }
  graph.add_edge({0, 4, poses[0].inverse() * poses[4], geom::Mat6::Identity()});

  const HessianSystem sys = assemble(graph);
  CHECK(sys.b.lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("assemble single edge block pattern", "[posegraph]") {
  auto rng = th::make_rng(5);
  const RandomEdge e = make_random_edge(rng, 0.1);
  PoseGraph graph;
  graph.add_node(0, e.pose_i);
  graph.add_node(1, e.pose_j);
  graph.add_edge({0, 1, e.measurement, geom::Mat6::Identity()});

  const HessianSystem sys = assemble(graph, Gauge::kAllFree);
  const auto [a, b] = edge_jacobians(e.error, e.pose_j);
  CHECK((sys.h.block<6, 6>(0, 0) - a.transpose() * a).norm() < 1e-12);
  CHECK((sys.h.block<6, 6>(0, 6) - a.transpose() * b).norm() < 1e-12);
  CHECK((sys.h.block<6, 6>(6, 0) - b.transpose() * a).norm() < 1e-12);
  CHECK((sys.h.block<6, 6>(6, 6) - b.transpose() * b).norm() < 1e-12);
}

TEST_CASE("assemble equals dense jacobian stacking", "[posegraph]") {
  auto rng = th::make_rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    PoseGraph graph;
    std::vector<geom::Pose> poses;
    const int n = 5;
    for (int k = 0; k < n; ++k) {
      poses.push_back(th::random_pose(rng));
      graph.add_node(k, poses.back());
    }
    std::vector<GraphEdge> edges;
    for (int k = 0; k + 1 < n; ++k) {
      geom::Mat6 sqrt_info = geom::Mat6::Identity();
      for (int d = 0; d < 6; ++d) sqrt_info(d, d) = th::uniform(rng, 0.5, 2.0);
      const geom::Pose meas =
          poses[k].inverse() * poses[k + 1] *
          geom::se3_exp(geom::Twist(th::random_vec3(rng, 0.05), th::random_vec3(rng, 0.05)));
      edges.push_back({k, k + 1, meas, sqrt_info * sqrt_info});
      graph.add_edge(edges.back());
    }
    const HessianSystem sys = assemble(graph, Gauge::kAllFree);

    // Dense oracle: stack the 6x6n jacobian rows explicitly.
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(6 * edges.size(), 6 * n);
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(6 * edges.size(), 6 * edges.size());
    Eigen::VectorXd err(6 * edges.size());
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const geom::Twist e = edge_error(edges[k].measurement, poses[edges[k].from], poses[edges[k].to]);
      const auto [a, b] = edge_jacobians(e, poses[edges[k].to]);
      jac.block<6, 6>(6 * k, 6 * edges[k].from) = a;
      jac.block<6, 6>(6 * k, 6 * edges[k].to) = b;
      omega.block<6, 6>(6 * k, 6 * k) = edges[k].information;
      err.segment<6>(6 * k) = e.vector();
    }
    CHECK((sys.h - jac.transpose() * omega * jac).norm() < 1e-12 * std::max(1.0, sys.h.norm()));
    CHECK((sys.b + jac.transpose() * omega * err).norm() < 1e-12 * std::max(1.0, sys.b.norm()));
  }
}

TEST_CASE("assemble requires a fixed node", "[posegraph]") {
  auto rng = th::make_rng(7);
  PoseGraph graph;
  graph.add_node(0, th::random_pose(rng));
  graph.add_node(1, th::random_pose(rng));
  graph.add_edge({0, 1, geom::Pose::identity(), geom::Mat6::Identity()});
  CHECK_THROWS_AS(assemble(graph), std::runtime_error);
}

TEST_CASE("marginalization with zero coupling changes nothing", "[posegraph]") {
  auto rng = th::make_rng(8);
  HessianSystem sys = random_spd_system(rng, 3);
  sys.h.block(0, 6, 6, 12).setZero();
  sys.h.block(6, 0, 12, 6).setZero();
  const MarginalPrior prior = marginalize(sys, {0});
  CHECK((prior.hessian - sys.h.block(6, 6, 12, 12)).norm() < 1e-12);
  CHECK((prior.rhs - sys.b.segment(6, 12)).norm() < 1e-12);
  CHECK(prior.ids == std::vector<int>({1, 2}));
}

TEST_CASE("marginalization reproduces the scalar two-by-two demo", "[posegraph]") {
  // H=[[2,1],[1,2]], b=[1,1] per component: H'=1.5, b'=0.5, X_r=1/3.
  HessianSystem sys;
  sys.h = Eigen::MatrixXd::Zero(12, 12);
  sys.h.block<6, 6>(0, 0) = 2.0 * geom::Mat6::Identity();
  sys.h.block<6, 6>(0, 6) = geom::Mat6::Identity();
  sys.h.block<6, 6>(6, 0) = geom::Mat6::Identity();
  sys.h.block<6, 6>(6, 6) = 2.0 * geom::Mat6::Identity();
  sys.b = Eigen::VectorXd::Ones(12);
  sys.ids = {0, 1};
  sys.block_of = {{0, 0}, {1, 1}};

  const MarginalPrior prior = marginalize(sys, {0});
  CHECK((prior.hessian - 1.5 * geom::Mat6::Identity()).norm() < 1e-12);
  CHECK((prior.rhs - 0.5 * Eigen::VectorXd::Ones(6)).norm() < 1e-12);

  const Eigen::VectorXd xr = prior.hessian.ldlt().solve(prior.rhs);
  CHECK((xr - (1.0 / 3.0) * Eigen::VectorXd::Ones(6)).norm() < 1e-12);
  const Eigen::VectorXd full = sys.h.ldlt().solve(sys.b);
  CHECK((xr - full.segment(6, 6)).norm() < 1e-12);
}

TEST_CASE("marginalization is exact on random SPD systems", "[posegraph]") {
  auto rng = th::make_rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int blocks = 2 + static_cast<int>(th::uniform(rng, 0.0, 18.0));
    const HessianSystem sys = random_spd_system(rng, blocks);
    const int n_marg = 1 + static_cast<int>(th::uniform(rng, 0.0, blocks - 1.0));
    std::vector<int> marg_ids;
    for (int k = 0; k < n_marg; ++k) marg_ids.push_back(k);

    const MarginalPrior prior = marginalize(sys, marg_ids);
    const Eigen::VectorXd reduced = prior.hessian.ldlt().solve(prior.rhs);
    const Eigen::VectorXd full = sys.h.ldlt().solve(sys.b);
    CHECK((reduced - full.tail(6 * (blocks - n_marg))).norm() < 1e-9);
  }
}

TEST_CASE("optimize leaves consistent graphs alone", "[posegraph]") {
  auto rng = th::make_rng(10);
  PoseGraph graph;
  std::vector<geom::Pose> poses;
  for (int k = 0; k < 4; ++k) {
    poses.push_back(th::random_pose(rng));
    graph.add_node(k, poses.back(), k == 0);
  }
  for (int k = 0; k + 1 < 4; ++k) {
    graph.add_edge({k, k + 1, poses[k].inverse() * poses[k + 1], geom::Mat6::Identity()});
  }
  const OptimizeReport report = optimize(graph);
  CHECK(report.converged);
  CHECK(report.iterations == 1);
  for (int k = 0; k < 4; ++k) CHECK(graph.node(k).pose.is_approx(poses[k], 1e-12));
}

TEST_CASE("optimize pulls a drifted chain onto an exact loop edge", "[posegraph]") {
  auto rng = th::make_rng(11);
  // Ground-truth square; odometry edges perturbed, loop edge exact.
  std::vector<geom::Pose> truth;
  truth.emplace_back(geom::Rotation::identity(), geom::Vec3(0, 0, 0));
  truth.emplace_back(geom::so3_exp(geom::Vec3(0, 0, M_PI / 2)), geom::Vec3(2, 0, 0));
  truth.emplace_back(geom::so3_exp(geom::Vec3(0, 0, M_PI)), geom::Vec3(2, 2, 0));
  truth.emplace_back(geom::so3_exp(geom::Vec3(0, 0, 3 * M_PI / 2)), geom::Vec3(0, 2, 0));

  // Edges carry the exact relative poses; the chain is initialized from a
  // drifting odometry guess, so the initial loop error is large.
  PoseGraph graph;
  geom::Pose running = truth[0];
  graph.add_node(0, running, true);
  for (int k = 1; k < 4; ++k) {
    const geom::Pose drift =
        geom::se3_exp(geom::Twist(th::random_vec3(rng, 0.05), th::random_vec3(rng, 0.03)));
    running = running * (truth[k - 1].inverse() * truth[k]) * drift;
    graph.add_node(k, running);
    graph.add_edge({k - 1, k, truth[k - 1].inverse() * truth[k], geom::Mat6::Identity()});
  }
  graph.add_edge({3, 0, truth[3].inverse() * truth[0], 100.0 * geom::Mat6::Identity()});

  auto total_error = [&] {
    double sum = 0.0;
    for (const auto& e : graph.edges()) {
      sum += edge_error(e.measurement, graph.node(e.from).pose, graph.node(e.to).pose)
                 .vector()
                 .squaredNorm();
    }
    return sum;
  };

  const double initial = total_error();
  const OptimizeReport report = optimize(graph, 50, 1e-6);
  CHECK(report.converged);
  CHECK(!report.diverged);
  CHECK(report.final_cost <= report.initial_cost);
  CHECK(total_error() < 0.01 * initial);
  // Fixed node bit-identical before/after.
  CHECK(graph.node(0).pose.translation == truth[0].translation);
  CHECK(graph.node(0).pose.rotation.quaternion().coeffs() == truth[0].rotation.quaternion().coeffs());
}

TEST_CASE("optimize without a fixed node is a gauge error", "[posegraph]") {
  PoseGraph graph;
  graph.add_node(0, geom::Pose::identity());
  graph.add_node(1, geom::Pose::identity());
  graph.add_edge({0, 1, geom::Pose::identity(), geom::Mat6::Identity()});
  CHECK_THROWS_AS(optimize(graph), std::runtime_error);
}

TEST_CASE("optimize honors a marginal prior", "[posegraph]") {
  // Prior anchoring node 1 at a shifted linearization; a consistent edge
  // connects it to the fixed node 0. The optimum balances both.
  PoseGraph graph;
  graph.add_node(0, geom::Pose::identity(), true);
  graph.add_node(1, geom::Pose(geom::Rotation::identity(), geom::Vec3(1, 0, 0)));
  graph.add_edge({0, 1, geom::Pose(geom::Rotation::identity(), geom::Vec3(1, 0, 0)),
                  geom::Mat6::Identity()});

  MarginalPrior prior;
  prior.ids = {1};
  prior.lin_poses = {geom::Pose(geom::Rotation::identity(), geom::Vec3(1.2, 0, 0))};
  prior.hessian = Eigen::MatrixXd::Identity(6, 6);
  prior.rhs = Eigen::VectorXd::Zero(6);
  graph.prior() = prior;

  const OptimizeReport report = optimize(graph);
  CHECK(report.converged);
  // Edge wants x=1, prior wants x=1.2, equal weights: x = 1.1.
  CHECK(std::abs(graph.node(1).pose.translation.x() - 1.1) < 1e-6);
}
