#include "gcnn/nearest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gcnn/error.hpp"

namespace gcnn {

namespace {
constexpr double kLo = -1.0 - 1e-9;
}

NearestNodeIndex::NearestNodeIndex(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  if (points_.empty()) throw ConfigError("nearest-node index over empty point set");
  // About two points per occupied cell on the sphere surface.
  const double n = static_cast<double>(points_.size());
  cells_per_axis_ = std::clamp(static_cast<int>(std::sqrt(n / 2.0)), 1, 256);
  cell_size_ = (2.0 + 2e-9) / cells_per_axis_;

  const std::size_t total = static_cast<std::size_t>(cells_per_axis_) * cells_per_axis_ * cells_per_axis_;
  std::vector<std::size_t> cell_of(points_.size());
  std::vector<int> counts(total + 1, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const Vec3& p = points_[i];
    const std::size_t c = (static_cast<std::size_t>(cell_coord(p.x())) * cells_per_axis_ + cell_coord(p.y())) *
                              cells_per_axis_ + cell_coord(p.z());
    cell_of[i] = c;
    ++counts[c + 1];
  }
  cell_start_.assign(total + 1, 0);
  for (std::size_t c = 0; c < total; ++c) cell_start_[c + 1] = cell_start_[c] + counts[c + 1];
  cell_items_.resize(points_.size());
  std::vector<int> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) cell_items_[fill[cell_of[i]]++] = static_cast<NodeIndex>(i);
}

int NearestNodeIndex::cell_coord(double v) const {
  return std::clamp(static_cast<int>((v - kLo) / cell_size_), 0, cells_per_axis_ - 1);
}

NodeIndex NearestNodeIndex::nearest(const Vec3& q) const {
  const int cx = cell_coord(q.x()), cy = cell_coord(q.y()), cz = cell_coord(q.z());
  double best_d2 = std::numeric_limits<double>::infinity();
  NodeIndex best = -1;

  auto visit = [&](int x, int y, int z) {
    const std::size_t c = (static_cast<std::size_t>(x) * cells_per_axis_ + y) * cells_per_axis_ + z;
    for (int k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
      const NodeIndex idx = cell_items_[k];
      const double d2 = (points_[idx] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
        best_d2 = d2;
        best = idx;
      }
    }
  };

  for (int r = 0; r <= cells_per_axis_; ++r) {
    // Visit the shell of cells at Chebyshev distance exactly r.
    for (int x = cx - r; x <= cx + r; ++x) {
      if (x < 0 || x >= cells_per_axis_) continue;
      for (int y = cy - r; y <= cy + r; ++y) {
        if (y < 0 || y >= cells_per_axis_) continue;
        const bool edge_xy = (x == cx - r || x == cx + r || y == cy - r || y == cy + r);
        for (int z = cz - r; z <= cz + r; ++z) {
          if (z < 0 || z >= cells_per_axis_) continue;
          if (!edge_xy && z != cz - r && z != cz + r) continue;
          visit(x, y, z);
        }
      }
    }
    // Anything outside the visited cube lies at least r cells away.
    const double reach = r * cell_size_;
    if (best >= 0 && best_d2 < reach * reach) break;
  }
  return best;
}

NodeIndex nearest_node_brute_force(std::span<const Vec3> points, const Vec3& q) {
  double best_d2 = std::numeric_limits<double>::infinity();
  NodeIndex best = -1;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = (points[i] - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<NodeIndex>(i);
    }
  }
  return best;
}

}  // namespace gcnn
