#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace gcnn {

using Vec3 = Eigen::Vector3d;
using NodeIndex = std::int32_t;
using Face = std::array<NodeIndex, 3>;

inline constexpr int kMaxIcosphereLevel = 7;

/// Node count of subdivision level k: 10 * 4^k + 2.
constexpr std::int64_t icosphere_node_count(int level) {
  return 10 * (std::int64_t{1} << (2 * level)) + 2;
}

/// One subdivision level of the icosahedral sphere mesh.
///
/// Node ordering is parent-first: the first N_{k-1} nodes are the nodes of
/// the previous level (same positions, bit-for-bit); edge midpoints follow in
/// ascending (min endpoint, max endpoint) order.
struct IcosphereLevel {
  int level = 0;
  std::vector<Vec3> positions;
  std::vector<Face> faces;
  std::vector<std::vector<NodeIndex>> adjacency;  // sorted ascending

  std::size_t node_count() const { return positions.size(); }
  std::size_t edge_count() const;
  std::size_t degree(NodeIndex node) const { return adjacency.at(node).size(); }

  /// Mean geodesic (arc) length of all edges, in radians.
  double mean_edge_length() const;

  /// Plain-text OBJ listing ("v x y z", "f i j k" with 1-based indices).
  void write_obj(std::ostream& out) const;
};

/// Groups of fine-level nodes averaged into each coarse node by mesh pooling.
/// Group i is {i} followed by the fine-level neighbors of i (sorted).
using PoolingGroups = std::vector<std::vector<NodeIndex>>;

class IcosphereHierarchy {
 public:
  /// Builds levels 0..max_level. Throws ConfigError when max_level is
  /// outside [0, 7].
  static IcosphereHierarchy build(int max_level);

  int max_level() const { return static_cast<int>(levels_.size()) - 1; }
  const IcosphereLevel& level(int k) const;

  /// Pooling groups mapping level coarse_level+1 onto coarse_level.
  const PoolingGroups& pooling_groups(int coarse_level) const;

 private:
  std::vector<IcosphereLevel> levels_;
  std::vector<PoolingGroups> groups_;  // groups_[k]: level k+1 -> k
};

/// Nodes at graph distance <= order from node (including node), ascending.
std::vector<NodeIndex> neighbor_ring(const IcosphereLevel& level, NodeIndex node,
                                     int order);

/// Regular icosahedron: golden-ratio vertex set, normalized.
IcosphereLevel base_icosahedron();

/// One midpoint subdivision step.
IcosphereLevel subdivide(const IcosphereLevel& coarse);

}  // namespace gcnn
