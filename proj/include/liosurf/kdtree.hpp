#pragma once

// Exact 3-d tree for k-nearest-neighbor queries over a fixed point set.
// Median-split build, branch-and-bound search, no approximation.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace liosurf {

class KdTree {
 public:
  struct Neighbor {
    std::uint32_t index = 0;
    double squared_distance = 0.0;
  };

  KdTree() = default;

  void build(const std::vector<Eigen::Vector3d>& points) {
    points_ = points;
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.clear();
    nodes_.reserve(points_.size());
    root_ = points_.empty() ? kNone : build_range(0, points_.size());
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  /// k nearest neighbors sorted by ascending distance.
  std::vector<Neighbor> knn(const Eigen::Vector3d& query, std::size_t k) const {
    std::vector<Neighbor> heap;  // max-heap on squared distance
    if (k == 0 || root_ == kNone) return heap;
    heap.reserve(k + 1);
    search(root_, query, k, heap);
    std::sort_heap(heap.begin(), heap.end(), by_distance);
    return heap;
  }

 private:
  struct Node {
    std::uint32_t point = 0;
    std::uint32_t left = kNone;
    std::uint32_t right = kNone;
    std::uint8_t axis = 0;
  };

  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  static bool by_distance(const Neighbor& a, const Neighbor& b) {
    return a.squared_distance < b.squared_distance;
  }

  std::uint32_t build_range(std::size_t begin, std::size_t end) {
    if (begin >= end) return kNone;
    Eigen::Vector3d lo = points_[order_[begin]];
    Eigen::Vector3d hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    Node node;
    node.point = order_[mid];
    node.axis = static_cast<std::uint8_t>(axis);
    const std::uint32_t id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(node);
    const std::uint32_t left = build_range(begin, mid);
    const std::uint32_t right = build_range(mid + 1, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::uint32_t id, const Eigen::Vector3d& query, std::size_t k,
              std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[id];
    const Eigen::Vector3d& p = points_[node.point];
    const double d2 = (p - query).squaredNorm();
    if (heap.size() < k) {
      heap.push_back({node.point, d2});
      std::push_heap(heap.begin(), heap.end(), by_distance);
    } else if (d2 < heap.front().squared_distance) {
      std::pop_heap(heap.begin(), heap.end(), by_distance);
      heap.back() = {node.point, d2};
      std::push_heap(heap.begin(), heap.end(), by_distance);
    }
    const double delta = query[node.axis] - p[node.axis];
    const std::uint32_t near = delta < 0.0 ? node.left : node.right;
    const std::uint32_t far = delta < 0.0 ? node.right : node.left;
    if (near != kNone) search(near, query, k, heap);
    if (far != kNone && (heap.size() < k || delta * delta < heap.front().squared_distance)) {
      search(far, query, k, heap);
    }
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::uint32_t root_ = kNone;
};

}  // namespace liosurf
