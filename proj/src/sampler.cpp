#include "gcnn/sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gcnn/error.hpp"
#include "gcnn/nearest.hpp"

namespace gcnn {

namespace {

void check_node(const IcosphereLevel& level, NodeIndex node) {
  if (node < 0 || static_cast<std::size_t>(node) >= level.node_count())
    throw IndexError("node " + std::to_string(node) + " out of range for level " + std::to_string(level.level));
}

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  }
  template <typename T>
  void value(T v) {
    bytes(&v, sizeof(v));
  }
};

}  // namespace

int patch_point_count(const PatchSpec& patch) {
  return std::visit(
      [](const auto& p) -> int {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RectangularPatch>) return p.sx * p.sy;
        else if constexpr (std::is_same_v<T, CircularPatch>) return p.rings * p.points_per_ring + (p.include_center ? 1 : 0);
        else throw ConfigError("polygonal patch width depends on the mesh level");
      },
      patch);
}

int polygonal_width(const IcosphereLevel& level, int order) {
  std::size_t width = 0;
  // Ring sizes are maximal away from the 12 pentagon nodes; a full scan keeps
  // the rule exact at coarse levels where every node is near a pentagon.
  for (std::size_t n = 0; n < level.node_count(); ++n)
    width = std::max(width, neighbor_ring(level, static_cast<NodeIndex>(n), order).size());
  return static_cast<int>(width);
}

void validate_patch(const PatchSpec& patch) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RectangularPatch>) {
          if (p.sx < 1 || p.sy < 1) throw ConfigError("rectangular patch needs Sx, Sy >= 1");
          if (!(p.spacing > 0.0)) throw ConfigError("rectangular patch spacing must be > 0");
        } else if constexpr (std::is_same_v<T, CircularPatch>) {
          if (p.rings < 1) throw ConfigError("circular patch needs rings >= 1");
          if (p.points_per_ring < 3) throw ConfigError("circular patch needs points_per_ring >= 3");
          if (!(p.ring_step > 0.0)) throw ConfigError("circular patch ring_step must be > 0");
        } else {
          if (p.order < 1) throw ConfigError("polygonal patch needs order R >= 1");
        }
      },
      patch);
}

std::string describe_patch(const PatchSpec& patch) {
  std::ostringstream os;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RectangularPatch>) os << "rectangular " << p.sx << "x" << p.sy << " spacing " << p.spacing;
        else if constexpr (std::is_same_v<T, CircularPatch>)
          os << "circular " << p.rings << " rings x " << p.points_per_ring << (p.include_center ? " + center" : "")
             << " step " << p.ring_step;
        else os << "polygonal R=" << p.order;
      },
      patch);
  return os.str();
}

TangentFrame tangent_frame(const Vec3& n) {
  Vec3 east = Vec3::UnitZ().cross(n);
  if (east.norm() < 1e-9) east = Vec3::UnitX();
  else east.normalize();
  return {east, n.cross(east)};
}

std::vector<Vec3> rectangular_patch_points(const IcosphereLevel& level, NodeIndex node, int sx, int sy,
                                           double spacing) {
  check_node(level, node);
  if (sx < 1 || sy < 1) throw ConfigError("rectangular patch needs Sx, Sy >= 1");
  const Vec3& n = level.positions[node];
  const TangentFrame frame = tangent_frame(n);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(sx) * sy);
  for (int iy = 0; iy < sy; ++iy) {
    const double dy = (iy - 0.5 * (sy - 1)) * spacing;
    for (int ix = 0; ix < sx; ++ix) {
      const double dx = (ix - 0.5 * (sx - 1)) * spacing;
      if (dx == 0.0 && dy == 0.0) {
        pts.push_back(n);
        continue;
      }
      // Gnomonic: tangent-plane offset projected back along the radius.
      pts.push_back((n + dx * frame.east + dy * frame.north).normalized());
    }
  }
  return pts;
}

std::vector<Vec3> circular_patch_points(const IcosphereLevel& level, NodeIndex node, int rings,
                                        int points_per_ring, double ring_step, bool include_center) {
  check_node(level, node);
  if (rings < 1 || points_per_ring < 3) throw ConfigError("circular patch needs rings >= 1, points_per_ring >= 3");
  const Vec3& n = level.positions[node];
  const TangentFrame frame = tangent_frame(n);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(rings) * points_per_ring + 1);
  if (include_center) pts.push_back(n);
  for (int r = 1; r <= rings; ++r) {
    const double rho = r * ring_step;
    for (int j = 0; j < points_per_ring; ++j) {
      const double az = 2.0 * std::numbers::pi * j / points_per_ring;
      const Vec3 dir = std::cos(az) * frame.east + std::sin(az) * frame.north;
      pts.push_back(std::cos(rho) * n + std::sin(rho) * dir);
    }
  }
  return pts;
}

std::vector<NodeIndex> polygonal_patch_points(const IcosphereLevel& level, NodeIndex node, int order) {
  check_node(level, node);
  if (order < 1) throw ConfigError("polygonal patch needs order R >= 1");
  std::vector<NodeIndex> ring = neighbor_ring(level, node, order);
  ring.resize(static_cast<std::size_t>(polygonal_width(level, order)), node);
  return ring;
}

std::uint64_t SamplerIndexMap::content_hash() const {
  Fnv1a h;
  h.value(static_cast<std::int32_t>(level));
  h.value(static_cast<std::int32_t>(patch.index()));
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RectangularPatch>) {
          h.value(p.sx);
          h.value(p.sy);
          h.value(std::bit_cast<std::uint64_t>(p.spacing));
        } else if constexpr (std::is_same_v<T, CircularPatch>) {
          h.value(p.rings);
          h.value(p.points_per_ring);
          h.value(std::bit_cast<std::uint64_t>(p.ring_step));
          h.value(static_cast<std::int32_t>(p.include_center));
        } else {
          h.value(p.order);
        }
      },
      patch);
  h.value(static_cast<std::uint64_t>(nodes));
  h.value(static_cast<std::uint64_t>(points));
  h.bytes(indices.data(), indices.size() * sizeof(NodeIndex));
  return h.h;
}

SamplerIndexMap build_index_map(const IcosphereHierarchy& hierarchy, int level, const PatchSpec& patch) {
  return build_index_map(hierarchy.level(level), patch);
}

SamplerIndexMap build_index_map(const IcosphereLevel& level, const PatchSpec& patch) {
  validate_patch(patch);
  SamplerIndexMap map;
  map.level = level.level;
  map.patch = patch;
  map.nodes = level.node_count();

  if (const auto* poly = std::get_if<PolygonalPatch>(&patch)) {
    map.points = static_cast<std::size_t>(polygonal_width(level, poly->order));
    map.indices.reserve(map.nodes * map.points);
    for (std::size_t n = 0; n < map.nodes; ++n) {
      std::vector<NodeIndex> ring = neighbor_ring(level, static_cast<NodeIndex>(n), poly->order);
      ring.resize(map.points, static_cast<NodeIndex>(n));
      map.indices.insert(map.indices.end(), ring.begin(), ring.end());
    }
    return map;
  }

  map.points = static_cast<std::size_t>(patch_point_count(patch));
  map.indices.resize(map.nodes * map.points);
  const NearestNodeIndex lookup(level);
  for (std::size_t n = 0; n < map.nodes; ++n) {
    const auto node = static_cast<NodeIndex>(n);
    std::vector<Vec3> pts;
    if (const auto* rect = std::get_if<RectangularPatch>(&patch))
      pts = rectangular_patch_points(level, node, rect->sx, rect->sy, rect->spacing);
    else {
      const auto& circ = std::get<CircularPatch>(patch);
      pts = circular_patch_points(level, node, circ.rings, circ.points_per_ring, circ.ring_step, circ.include_center);
    }
    for (std::size_t p = 0; p < map.points; ++p) map.indices[n * map.points + p] = lookup.nearest(pts[p]);
  }
  return map;
}

std::vector<double> gather(std::span<const double> values, const SamplerIndexMap& map) {
  if (values.size() != map.nodes)
    throw ShapeError("gather: " + std::to_string(values.size()) + " values for a level with " +
                     std::to_string(map.nodes) + " nodes");
  std::vector<double> out(map.indices.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = values[map.indices[i]];
  return out;
}

}  // namespace gcnn
