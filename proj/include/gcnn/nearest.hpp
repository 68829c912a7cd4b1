#pragma once

#include <span>
#include <vector>

#include "gcnn/icosphere.hpp"

namespace gcnn {

/// Exact nearest-node lookup over a fixed point set (uniform cell grid).
/// Ties in Euclidean distance resolve to the lowest node index.
class NearestNodeIndex {
 public:
  explicit NearestNodeIndex(std::span<const Vec3> points);
  explicit NearestNodeIndex(const IcosphereLevel& level) : NearestNodeIndex(std::span<const Vec3>(level.positions)) {}

  NodeIndex nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }

 private:
  int cell_coord(double v) const;

  std::vector<Vec3> points_;
  int cells_per_axis_ = 1;
  double cell_size_ = 2.0;
  std::vector<int> cell_start_;
  std::vector<NodeIndex> cell_items_;
};

/// Reference O(N) search with the same tie rule; used by tests and small sets.
NodeIndex nearest_node_brute_force(std::span<const Vec3> points, const Vec3& query);

}  // namespace gcnn
