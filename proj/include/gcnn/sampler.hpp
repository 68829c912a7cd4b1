#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gcnn/icosphere.hpp"

namespace gcnn {

struct RectangularPatch {
  int sx = 5;
  int sy = 5;
  double spacing = 0.0;  // radians, > 0
  bool operator==(const RectangularPatch&) const = default;
};

struct CircularPatch {
  int rings = 2;
  int points_per_ring = 12;
  double ring_step = 0.0;  // radians, > 0
  bool include_center = true;
  bool operator==(const CircularPatch&) const = default;
};

struct PolygonalPatch {
  int order = 1;
  bool operator==(const PolygonalPatch&) const = default;
};

using PatchSpec = std::variant<RectangularPatch, CircularPatch, PolygonalPatch>;

/// Filter-point count for geometric patches. Polygonal patches depend on
/// the mesh; use polygonal_width() for those.
int patch_point_count(const PatchSpec& patch);
int polygonal_width(const IcosphereLevel& level, int order);
void validate_patch(const PatchSpec& patch);
std::string describe_patch(const PatchSpec& patch);

/// Tangent frame at a unit vector: east = normalize(z x n), north = n x east;
/// near the poles east falls back to +x.
struct TangentFrame {
  Vec3 east;
  Vec3 north;
};
TangentFrame tangent_frame(const Vec3& n);

std::vector<Vec3> rectangular_patch_points(const IcosphereLevel& level, NodeIndex node, int sx, int sy,
                                           double spacing);
std::vector<Vec3> circular_patch_points(const IcosphereLevel& level, NodeIndex node, int rings,
                                        int points_per_ring, double ring_step, bool include_center);
/// R-ring node indices, padded with the node itself to the per-level maximum.
std::vector<NodeIndex> polygonal_patch_points(const IcosphereLevel& level, NodeIndex node, int order);

/// Full-node filter point matrix: indices(n, p) is the node read by filter
/// point p of node n's patch. Row-major N x P.
struct SamplerIndexMap {
  int level = 0;
  PatchSpec patch;
  std::size_t nodes = 0;
  std::size_t points = 0;
  std::vector<NodeIndex> indices;

  NodeIndex at(std::size_t n, std::size_t p) const { return indices[n * points + p]; }
  std::span<const NodeIndex> row(std::size_t n) const { return {indices.data() + n * points, points}; }

  /// FNV-1a over level, patch parameters and indices; stored in checkpoints.
  std::uint64_t content_hash() const;
};

SamplerIndexMap build_index_map(const IcosphereHierarchy& hierarchy, int level, const PatchSpec& patch);
SamplerIndexMap build_index_map(const IcosphereLevel& level, const PatchSpec& patch);

/// out[n * P + p] = values[indices(n, p)]; values holds one channel plane.
std::vector<double> gather(std::span<const double> values, const SamplerIndexMap& map);

}  // namespace gcnn
