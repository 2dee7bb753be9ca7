#pragma once

// Keyframe pose graph over SE(3): relative-pose edge errors, first-order
// Jacobian blocks A_ij/B_ij, block normal-equation assembly, Schur-complement
// marginalization, and damped Gauss-Newton optimization with gauge fixing.

#include <liosurf/geometry.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace liosurf::graph {

using geom::Mat6;
using geom::Pose;
using geom::Twist;
using geom::Vec6;

struct GraphNode {
  int id = 0;
  Pose pose;
  bool fixed = false;
};

struct GraphEdge {
  int from = 0;
  int to = 0;
  Pose measurement;                    // T_ij, the expected T_i^-1 T_j
  Mat6 information = Mat6::Identity(); // symmetric PSD
};

/// Quadratic prior over retained nodes produced by marginalization,
/// anchored at the linearization poses.
struct MarginalPrior {
  std::vector<int> ids;
  std::vector<Pose> lin_poses;
  Eigen::MatrixXd hessian;
  Eigen::VectorXd rhs;
};

/// e_ij = log(T_ij^-1 T_i^-1 T_j).
inline Twist edge_error(const Pose& measurement, const Pose& pose_i, const Pose& pose_j) {
  return geom::se3_log(measurement.inverse() * pose_i.inverse() * pose_j);
}

/// First-order blocks of the perturbed error
///   e(exp(d_i) T_i, exp(d_j) T_j) ~ e + A_ij d_i + B_ij d_j
/// with A_ij = -Jr^-1(e) Ad(T_j^-1) and B_ij = +Jr^-1(e) Ad(T_j^-1).
inline std::pair<Mat6, Mat6> edge_jacobians(const Twist& error, const Pose& pose_j) {
  const Mat6 jr_inv = geom::right_jacobian_inv_approx(error);
  const Mat6 ad = geom::adjoint(pose_j.inverse());
  const Mat6 b = jr_inv * ad;
  return {-b, b};
}

class PoseGraph {
 public:
  GraphNode& add_node(int id, const Pose& pose, bool fixed = false) {
    if (index_.count(id)) throw std::invalid_argument("PoseGraph: duplicate node id");
    index_[id] = nodes_.size();
    nodes_.push_back({id, pose, fixed});
    return nodes_.back();
  }

  void add_edge(const GraphEdge& edge) {
    if (edge.from == edge.to) throw std::invalid_argument("PoseGraph: self edge");
    if (!index_.count(edge.from) || !index_.count(edge.to)) {
      throw std::invalid_argument("PoseGraph: edge references unknown node");
    }
    if ((edge.information - edge.information.transpose()).norm() > 1e-12) {
      throw std::invalid_argument("PoseGraph: information matrix not symmetric");
    }
    edges_.push_back(edge);
  }

  bool has_node(int id) const { return index_.count(id) > 0; }

  const GraphNode& node(int id) const { return nodes_[index_.at(id)]; }
  GraphNode& node(int id) { return nodes_[index_.at(id)]; }

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  std::vector<GraphEdge>& edges() { return edges_; }

  std::optional<MarginalPrior>& prior() { return prior_; }
  const std::optional<MarginalPrior>& prior() const { return prior_; }

  void remove_node(int id) {
    const auto it = index_.find(id);
    if (it == index_.end()) return;
    nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(it->second));
    std::erase_if(edges_, [id](const GraphEdge& e) { return e.from == id || e.to == id; });
    index_.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) index_[nodes_[i].id] = i;
  }

 private:
  std::vector<GraphNode> nodes_;
  std::vector<GraphEdge> edges_;
  std::unordered_map<int, std::size_t> index_;
  std::optional<MarginalPrior> prior_;
};

/// Normal equations H dX = b over the parameterized nodes (6 rows each).
struct HessianSystem {
  Eigen::MatrixXd h;
  Eigen::VectorXd b;
  std::vector<int> ids;  // parameterized node ids, in block order
  std::unordered_map<int, int> block_of;
};

enum class Gauge {
  kRequireFixed,  // fixed nodes excluded; at least one required
  kAllFree,       // every node parameterized (marginalization subsystems)
};

/// H = sum J^T Omega J, b = -sum J^T Omega e, touching only the four blocks
/// of each edge. The prior, when present, contributes its Hessian plus
/// rhs - H * r with r the current deviation from the linearization poses.
inline HessianSystem assemble(const PoseGraph& graph, Gauge gauge = Gauge::kRequireFixed) {
  HessianSystem sys;
  bool any_fixed = false;
  for (const auto& n : graph.nodes()) {
    if (n.fixed && gauge == Gauge::kRequireFixed) {
      any_fixed = true;
      continue;
    }
    sys.block_of[n.id] = static_cast<int>(sys.ids.size());
    sys.ids.push_back(n.id);
  }
  if (gauge == Gauge::kRequireFixed && !any_fixed) {
    throw std::runtime_error("assemble: pose graph has no fixed node (gauge error)");
  }
  const int dim = 6 * static_cast<int>(sys.ids.size());
  sys.h = Eigen::MatrixXd::Zero(dim, dim);
  sys.b = Eigen::VectorXd::Zero(dim);

  for (const auto& edge : graph.edges()) {
    const Pose& ti = graph.node(edge.from).pose;
    const Pose& tj = graph.node(edge.to).pose;
    const Twist e = edge_error(edge.measurement, ti, tj);
    const auto [a, b] = edge_jacobians(e, tj);
    const Vec6 ev = e.vector();

    const auto it_i = sys.block_of.find(edge.from);
    const auto it_j = sys.block_of.find(edge.to);
    const bool free_i = it_i != sys.block_of.end();
    const bool free_j = it_j != sys.block_of.end();
    const int bi = free_i ? 6 * it_i->second : 0;
    const int bj = free_j ? 6 * it_j->second : 0;

    if (free_i) {
      sys.h.block<6, 6>(bi, bi) += a.transpose() * edge.information * a;
      sys.b.segment<6>(bi) -= a.transpose() * edge.information * ev;
    }
    if (free_j) {
      sys.h.block<6, 6>(bj, bj) += b.transpose() * edge.information * b;
      sys.b.segment<6>(bj) -= b.transpose() * edge.information * ev;
    }
    if (free_i && free_j) {
      const Mat6 ab = a.transpose() * edge.information * b;
      sys.h.block<6, 6>(bi, bj) += ab;
      sys.h.block<6, 6>(bj, bi) += ab.transpose();
    }
  }

  if (graph.prior()) {
    const MarginalPrior& prior = *graph.prior();
    const int pn = static_cast<int>(prior.ids.size());
    Eigen::VectorXd r(6 * pn);
    for (int k = 0; k < pn; ++k) {
      const Pose& current = graph.node(prior.ids[k]).pose;
      r.segment<6>(6 * k) = geom::se3_log(current * prior.lin_poses[k].inverse()).vector();
    }
    const Eigen::VectorXd rhs = prior.rhs - prior.hessian * r;
    for (int ki = 0; ki < pn; ++ki) {
      const auto it_i = sys.block_of.find(prior.ids[ki]);
      if (it_i == sys.block_of.end()) continue;
      sys.b.segment<6>(6 * it_i->second) += rhs.segment<6>(6 * ki);
      for (int kj = 0; kj < pn; ++kj) {
        const auto it_j = sys.block_of.find(prior.ids[kj]);
        if (it_j == sys.block_of.end()) continue;
        sys.h.block<6, 6>(6 * it_i->second, 6 * it_j->second) +=
            prior.hessian.block<6, 6>(6 * ki, 6 * kj);
      }
    }
  }
  return sys;
}

/// Schur complement onto the retained blocks:
///   H' = H_rr - H_rm H_mm^-1 H_mr,  b' = b_r - H_rm H_mm^-1 b_m.
/// H_mm gets +1e-9 I when its smallest eigenvalue drops below 1e-12.
/// Linearization poses are left for the caller to attach.
inline MarginalPrior marginalize(const HessianSystem& sys, const std::vector<int>& marginal_ids) {
  std::vector<int> marg, keep;
  for (int id : marginal_ids) {
    if (!sys.block_of.count(id)) throw std::invalid_argument("marginalize: unknown node id");
  }
  for (std::size_t k = 0; k < sys.ids.size(); ++k) {
    const bool is_marg =
        std::find(marginal_ids.begin(), marginal_ids.end(), sys.ids[k]) != marginal_ids.end();
    (is_marg ? marg : keep).push_back(static_cast<int>(k));
  }

  const int nm = 6 * static_cast<int>(marg.size());
  const int nr = 6 * static_cast<int>(keep.size());
  Eigen::MatrixXd hmm(nm, nm), hmr(nm, nr);
  Eigen::MatrixXd hrr(nr, nr);
  Eigen::VectorXd bm(nm), br(nr);
  auto copy_block = [&](Eigen::MatrixXd& dst, int di, int dj, int si, int sj) {
    dst.block<6, 6>(6 * di, 6 * dj) = sys.h.block<6, 6>(6 * si, 6 * sj);
  };
  for (std::size_t i = 0; i < marg.size(); ++i) {
    bm.segment<6>(6 * i) = sys.b.segment<6>(6 * marg[i]);
    for (std::size_t j = 0; j < marg.size(); ++j) copy_block(hmm, i, j, marg[i], marg[j]);
    for (std::size_t j = 0; j < keep.size(); ++j) copy_block(hmr, i, j, marg[i], keep[j]);
  }
  for (std::size_t i = 0; i < keep.size(); ++i) {
    br.segment<6>(6 * i) = sys.b.segment<6>(6 * keep[i]);
    for (std::size_t j = 0; j < keep.size(); ++j) copy_block(hrr, i, j, keep[i], keep[j]);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hmm);
  if (eig.eigenvalues()(0) < 1e-12) {
    hmm.diagonal().array() += 1e-9;
    eig.compute(hmm);
    if (eig.eigenvalues()(0) <= 0.0) {
      throw std::runtime_error("marginalize: H_mm singular after regularization");
    }
  }
  const Eigen::MatrixXd hmm_inv_hmr = hmm.ldlt().solve(hmr);
  const Eigen::VectorXd hmm_inv_bm = hmm.ldlt().solve(bm);

  MarginalPrior prior;
  for (int k : keep) prior.ids.push_back(sys.ids[k]);
  prior.hessian = hrr - hmr.transpose() * hmm_inv_hmr;
  prior.hessian = 0.5 * (prior.hessian + prior.hessian.transpose().eval());
  prior.rhs = br - hmr.transpose() * hmm_inv_bm;
  return prior;
}

struct OptimizeReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  bool diverged = false;
};

namespace detail {

inline double graph_cost(const PoseGraph& graph) {
  double cost = 0.0;
  for (const auto& edge : graph.edges()) {
    const Vec6 e =
        edge_error(edge.measurement, graph.node(edge.from).pose, graph.node(edge.to).pose).vector();
    cost += 0.5 * e.dot(edge.information * e);
  }
  if (graph.prior()) {
    const MarginalPrior& prior = *graph.prior();
    Eigen::VectorXd r(6 * prior.ids.size());
    for (std::size_t k = 0; k < prior.ids.size(); ++k) {
      r.segment<6>(6 * k) =
          geom::se3_log(graph.node(prior.ids[k]).pose * prior.lin_poses[k].inverse()).vector();
    }
    cost += 0.5 * r.dot(prior.hessian * r) - prior.rhs.dot(r);
  }
  return cost;
}

}  // namespace detail

/// Damped Gauss-Newton: solve (H + lambda I) dX = b, left-update the free
/// nodes, reject steps that increase the cost (lambda * 10), stop when the
/// accepted step's max-norm falls below 1e-8.
inline OptimizeReport optimize(PoseGraph& graph, int max_iterations = 50, double damping = 1e-6) {
  OptimizeReport report;
  double lambda = damping;
  report.initial_cost = detail::graph_cost(graph);
  double cost = report.initial_cost;

  for (int iter = 0; iter < max_iterations; ++iter) {
    report.iterations = iter + 1;
    const HessianSystem sys = assemble(graph);
    if (sys.ids.empty()) {
      report.converged = true;
      break;
    }
    Eigen::MatrixXd damped = sys.h;
    damped.diagonal().array() += lambda;
    const Eigen::VectorXd step = damped.ldlt().solve(sys.b);
    if (step.lpNorm<Eigen::Infinity>() < 1e-8) {
      report.converged = true;
      break;
    }

    std::vector<Pose> saved;
    saved.reserve(sys.ids.size());
    for (std::size_t k = 0; k < sys.ids.size(); ++k) {
      saved.push_back(graph.node(sys.ids[k]).pose);
      const Twist delta = Twist::from_vector(step.segment<6>(6 * static_cast<int>(k)));
      graph.node(sys.ids[k]).pose = geom::se3_exp(delta) * saved.back();
    }
    const double trial_cost = detail::graph_cost(graph);
    if (trial_cost <= cost) {
      cost = trial_cost;
      lambda = std::max(lambda * 0.1, 1e-12);
    } else {
      for (std::size_t k = 0; k < sys.ids.size(); ++k) graph.node(sys.ids[k]).pose = saved[k];
      lambda *= 10.0;
      if (lambda > 1e10) break;
    }
  }
  report.final_cost = cost;
  report.diverged = report.final_cost > 10.0 * std::max(report.initial_cost, 1e-12);
  return report;
}

}  // namespace liosurf::graph
