#pragma once

// Scan-line curvature, edge/planar feature selection, and IMU-driven
// deskewing of spinning-LiDAR frames.

#include <liosurf/geometry.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace liosurf::feat {

using geom::Pose;
using geom::Vec3;

struct ScanPoint {
  Vec3 position = Vec3::Zero();  // sensor frame, meters
  int ring = 0;
  double rel_time = 0.0;  // fraction of the scan period, in [0, 1]
};

/// One LiDAR sweep. Points are grouped by ring and azimuth-ordered within
/// each ring; the stamp is the scan END time.
struct LidarFrame {
  double stamp = 0.0;
  std::vector<ScanPoint> points;
};

struct FeatureSet {
  std::vector<ScanPoint> edges;
  std::vector<ScanPoint> planars;
};

struct FeatureConfig {
  int curvature_window = 5;
  int sectors = 6;
  int max_edges_per_sector = 2;
  int max_planars_per_sector = 4;
  double edge_min_curvature = 0.01;
  double planar_max_curvature = 0.005;
  double min_range = 1.0;
  double max_range = 80.0;
  double occlusion_range_jump = 0.3;  // meters between azimuth neighbors
};

/// Contiguous [begin, end) index ranges of the frame's rings, in ring order.
inline std::vector<std::pair<std::size_t, std::size_t>> ring_ranges(const LidarFrame& frame) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= frame.points.size(); ++i) {
    if (i == frame.points.size() || frame.points[i].ring != frame.points[begin].ring) {
      ranges.emplace_back(begin, i);
      begin = i;
    }
  }
  return ranges;
}

/// LOAM-style smoothness per point of one ring:
///   c_i = || sum_{j in window, j != i} (x_i - x_j) || / (2 window ||x_i||).
/// Boundary points (and rings shorter than 2*window+1) are NaN.
inline std::vector<double> compute_curvature(std::span<const ScanPoint> ring, int window) {
  const double invalid = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> curvature(ring.size(), invalid);
  const std::size_t w = static_cast<std::size_t>(window);
  if (window <= 0 || ring.size() < 2 * w + 1) return curvature;
  for (std::size_t i = w; i + w < ring.size(); ++i) {
    const double range = ring[i].position.norm();
    if (range < 1e-9) continue;
    Vec3 sum = Vec3::Zero();
    for (std::size_t j = i - w; j <= i + w; ++j) {
      if (j == i) continue;
      sum += ring[i].position - ring[j].position;
    }
    curvature[i] = sum.norm() / (2.0 * window * range);
  }
  return curvature;
}

/// Per ring and azimuth sector: highest-curvature points above the edge
/// threshold become edges, lowest below the planar threshold become planars.
/// Picking a point suppresses its +/-window index neighborhood.
inline FeatureSet extract_features(const LidarFrame& frame, const FeatureConfig& config) {
  FeatureSet features;
  const int w = config.curvature_window;

  for (const auto& [ring_begin, ring_end] : ring_ranges(frame)) {
    // Range gate before curvature.
    std::vector<ScanPoint> kept;
    kept.reserve(ring_end - ring_begin);
    for (std::size_t i = ring_begin; i < ring_end; ++i) {
      const double r = frame.points[i].position.norm();
      if (r >= config.min_range && r <= config.max_range) kept.push_back(frame.points[i]);
    }
    const std::size_t n = kept.size();
    if (n < 2 * static_cast<std::size_t>(w) + 1) continue;

    const std::vector<double> curvature = compute_curvature(kept, w);

    // Points on the far side of a range discontinuity see an occlusion
    // boundary, not a physical edge; block them for edge selection.
    std::vector<char> edge_blocked(n, 0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double r0 = kept[i].position.norm();
      const double r1 = kept[i + 1].position.norm();
      if (std::abs(r1 - r0) <= config.occlusion_range_jump) continue;
      if (r1 > r0) {
        for (std::size_t j = i + 1; j < std::min(n, i + 1 + static_cast<std::size_t>(w)); ++j)
          edge_blocked[j] = 1;
      } else {
        for (std::size_t j = (i >= static_cast<std::size_t>(w) ? i - w + 1 : 0); j <= i; ++j)
          edge_blocked[j] = 1;
      }
    }

    std::vector<char> suppressed(n, 0);
    auto pick = [&](std::size_t i, std::vector<ScanPoint>& out) {
      out.push_back(kept[i]);
      const std::size_t lo = i >= static_cast<std::size_t>(w) ? i - w : 0;
      const std::size_t hi = std::min(n - 1, i + static_cast<std::size_t>(w));
      for (std::size_t j = lo; j <= hi; ++j) suppressed[j] = 1;
    };

    for (int s = 0; s < config.sectors; ++s) {
      const std::size_t begin = n * static_cast<std::size_t>(s) / config.sectors;
      const std::size_t end = n * static_cast<std::size_t>(s + 1) / config.sectors;
      if (begin >= end) continue;
      std::vector<std::size_t> idx;
      idx.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        if (!std::isnan(curvature[i])) idx.push_back(i);
      }

      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t a, std::size_t b) { return curvature[a] > curvature[b]; });
      int edges = 0;
      for (std::size_t i : idx) {
        if (edges >= config.max_edges_per_sector || curvature[i] < config.edge_min_curvature) break;
        if (suppressed[i] || edge_blocked[i]) continue;
        pick(i, features.edges);
        ++edges;
      }

      int planars = 0;
      for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
        const std::size_t i = *it;
        if (planars >= config.max_planars_per_sector || curvature[i] > config.planar_max_curvature) break;
        if (suppressed[i]) continue;
        pick(i, features.planars);
        ++planars;
      }
    }
  }
  return features;
}

/// Re-expresses every point in the sensor frame at scan end:
///   p' = T(t_end)^-1 * T(t_point) * p,   t_point = stamp - (1 - rel_time) * period.
/// The motion closure must cover [stamp - period, stamp].
inline LidarFrame deskew(const LidarFrame& frame, double scan_period,
                         const std::function<Pose(double)>& motion) {
  LidarFrame out;
  out.stamp = frame.stamp;
  out.points.reserve(frame.points.size());
  const Pose end_inv = motion(frame.stamp).inverse();

  std::unordered_map<double, Pose> cache;  // beams of one column share a time
  for (const ScanPoint& p : frame.points) {
    const double t = frame.stamp - (1.0 - p.rel_time) * scan_period;
    auto it = cache.find(t);
    if (it == cache.end()) it = cache.emplace(t, end_inv * motion(t)).first;
    ScanPoint q = p;
    q.position = it->second * p.position;
    q.rel_time = 1.0;
    out.points.push_back(q);
  }
  return out;
}

}  // namespace liosurf::feat
